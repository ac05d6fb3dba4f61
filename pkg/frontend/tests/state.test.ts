import { describe, expect, it } from 'vitest';
import { applyResult, emptyViewState, revisionsMonotone } from '../src/state.js';
import type { ResultDoc } from '../src/protocol.js';

function resultDoc(revision: number, stale = false): ResultDoc {
  return {
    revision,
    stale,
    result: {
      boundary: [1, 2, 3],
      contour_mm: [
        [0, 0],
        [1, 0],
        [revision, 1],
      ],
      flow_value: 0,
      mu: 100,
      timing_ms: { total_ms: 4.2 },
      snapped_refinements: [],
    },
    error: null,
  };
}

describe('applyResult', () => {
  it('applies fresh documents and tracks the revision', () => {
    const state = emptyViewState();
    expect(applyResult(state, resultDoc(3))).toBe(true);
    expect(state.shownRevision).toBe(3);
    expect(state.latencyMs).toBeCloseTo(4.2);
    expect(state.contourMm?.[2][0]).toBe(3);
  });

  it('never lets a stale revision overwrite a newer one', () => {
    const state = emptyViewState();
    applyResult(state, resultDoc(5));
    const updated = applyResult(state, resultDoc(2));
    expect(updated).toBe(false);
    expect(state.shownRevision).toBe(5);
    expect(state.contourMm?.[2][0]).toBe(5);
    expect(state.resultLog.at(-1)).toEqual({ kind: 'dropped-stale', revision: 2 });
    expect(revisionsMonotone(state)).toBe(true);
  });

  it('marks staleness when newer mutations are outstanding', () => {
    const state = emptyViewState();
    state.latestSentRevision = 9;
    applyResult(state, resultDoc(7));
    expect(state.stale).toBe(true);
  });

  it('keeps the last contour when an empty document arrives', () => {
    const state = emptyViewState();
    applyResult(state, resultDoc(4));
    applyResult(state, { revision: 0, stale: true, result: null, error: 'x' });
    expect(state.contourMm?.[2][0]).toBe(4);
    expect(state.error).toBe('x');
  });
});
