"""raycut: interactive ray-graph min-cut segmentation with refinement seeds."""

from .cutbuilder import (
    BuildConfig,
    CostField,
    NodeMap,
    RefinementSeed,
    apply_refinement,
    assemble_network,
    compute_costs,
    estimate_mean,
    snap_refinements,
    terminal_weights,
)
from .errors import FormatError, InfeasibleCutError, ValidationError
from .evalbench import (
    BenchmarkReport,
    brute_force_boundary,
    brute_force_min_cut,
    dice,
    run_benchmark,
)
from .flownet import (
    INF,
    SINK,
    SOURCE,
    CutLabels,
    FlowNetwork,
    cut_value,
    max_flow,
    rebuild_with,
)
from .imaging import (
    Mask,
    PhantomSpec,
    ScalarGrid,
    load_grid,
    load_mask,
    make_phantom,
    sample_at,
    sample_points,
    save_grid,
    save_mask,
)
from .segmenter import (
    SegmentationRequest,
    SegmentationResult,
    SurfaceMesh,
    boundary_to_contour,
    contour_to_mask,
    extract_boundary,
    segment,
)
from .templates import (
    NodeIndex,
    RayGeometry,
    Template,
    closest_node,
    generate_rays,
    make_template,
)

__version__ = "0.1.0"
