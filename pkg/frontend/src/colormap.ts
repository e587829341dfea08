// Heatmap colors: a compact viridis-style ramp. Pure functions of
// (value, bounds) so re-rendering without data changes is pixel-stable.

const ANCHORS: [number, number, number][] = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

export function valueToColor(value: number, min: number, max: number): [number, number, number] {
  let t = (value - min) / (max - min);
  if (!Number.isFinite(t)) t = 0;
  t = Math.min(1, Math.max(0, t));
  const scaled = t * (ANCHORS.length - 1);
  const i = Math.min(ANCHORS.length - 2, Math.floor(scaled));
  const f = scaled - i;
  const a = ANCHORS[i];
  const b = ANCHORS[i + 1];
  return [
    Math.round(a[0] + (b[0] - a[0]) * f),
    Math.round(a[1] + (b[1] - a[1]) * f),
    Math.round(a[2] + (b[2] - a[2]) * f),
  ];
}

/** Per-vertex RGB triplets in [0, 1] for a three.js color attribute. */
export function vertexColors(values: ArrayLike<number>, min: number, max: number): Float32Array {
  const out = new Float32Array(values.length * 3);
  for (let i = 0; i < values.length; i++) {
    const [r, g, b] = valueToColor(values[i], min, max);
    out[3 * i] = r / 255;
    out[3 * i + 1] = g / 255;
    out[3 * i + 2] = b / 255;
  }
  return out;
}

export function legendStops(min: number, max: number, n = 5): { value: number; css: string }[] {
  const stops = [];
  for (let i = 0; i < n; i++) {
    const value = min + ((max - min) * i) / (n - 1);
    const [r, g, b] = valueToColor(value, min, max);
    stops.push({ value, css: `rgb(${r},${g},${b})` });
  }
  return stops;
}
