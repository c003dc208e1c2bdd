/**
 * Fixed depth colormap for overlay points: near is blue, far runs
 * through green and yellow to red. Depths are normalized to [0, 1] over
 * the frame before lookup so the full ramp is always used.
 */

type Rgb = [number, number, number];

const STOPS: [number, Rgb][] = [
  [0.0, [48, 18, 227]],
  [0.25, [62, 156, 254]],
  [0.5, [34, 227, 146]],
  [0.75, [225, 220, 55]],
  [1.0, [210, 41, 45]],
];

export function depthColor(t: number): Rgb {
  const x = Math.min(1, Math.max(0, t));
  for (let i = 1; i < STOPS.length; i++) {
    const [t1, c1] = STOPS[i];
    if (x <= t1) {
      const [t0, c0] = STOPS[i - 1];
      const f = (x - t0) / (t1 - t0);
      return [
        Math.round(c0[0] + f * (c1[0] - c0[0])),
        Math.round(c0[1] + f * (c1[1] - c0[1])),
        Math.round(c0[2] + f * (c1[2] - c0[2])),
      ];
    }
  }
  return STOPS[STOPS.length - 1][1];
}

export function cssDepthColor(t: number): string {
  const [r, g, b] = depthColor(t);
  return `rgb(${r}, ${g}, ${b})`;
}

/** Min-max normalize; a constant (or single-sample) list maps to 0.5. */
export function normalizeDepths(depths: number[]): number[] {
  if (depths.length === 0) return [];
  const lo = Math.min(...depths);
  const hi = Math.max(...depths);
  if (hi === lo) return depths.map(() => 0.5);
  return depths.map((d) => (d - lo) / (hi - lo));
}
