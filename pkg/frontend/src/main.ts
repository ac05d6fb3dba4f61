import { App } from './app.js';

const root = document.getElementById('app');
if (root) {
  const base = new URLSearchParams(location.search).get('api') ?? 'http://127.0.0.1:8000';
  new App(root, base);
}
