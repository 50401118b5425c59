// Stroke capture geometry: pointer samples -> normalized polyline.

export type Point = [number, number];

const MAX_POINTS = 64;

/**
 * Convert raw pointer samples (canvas pixel coordinates) into a polyline in
 * the unit square. Strokes with fewer than two distinct samples are
 * discarded (null). Long strokes are resampled down to at most 64 points;
 * both endpoints are always kept exactly.
 */
export function captureStroke(
  samples: Point[],
  width: number,
  height: number,
): Point[] | null {
  if (width <= 0 || height <= 0) return null;
  const distinct: Point[] = [];
  for (const p of samples) {
    const last = distinct[distinct.length - 1];
    if (!last || last[0] !== p[0] || last[1] !== p[1]) distinct.push(p);
  }
  if (distinct.length < 2) return null;
  const picked = resample(distinct, MAX_POINTS);
  return picked.map(([x, y]) => [
    clamp01(x / (width - 1)),
    clamp01(y / (height - 1)),
  ]);
}

/** Keep at most maxPoints by uniform index selection; endpoints exact. */
export function resample(points: Point[], maxPoints: number): Point[] {
  if (points.length <= maxPoints) return points.slice();
  const out: Point[] = [];
  const last = points.length - 1;
  for (let i = 0; i < maxPoints; i++) {
    const idx = Math.round((i * last) / (maxPoints - 1));
    out.push(points[idx]);
  }
  out[0] = points[0];
  out[out.length - 1] = points[last];
  return out;
}

export function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}
