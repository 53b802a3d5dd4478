/**
 * Coordinate transforms between screen pixels, voxel indices, and mm space.
 *
 * These must mirror the service conventions exactly: dims are (nx, ny, nz),
 * spacing/origin are per-axis mm, and slice images are laid out as
 *   axis z -> (col, row) = (x, y)
 *   axis y -> (col, row) = (x, z)
 *   axis x -> (col, row) = (y, z)
 */

export type Axis = "x" | "y" | "z";

export interface VolumeMeta {
  session_id: string;
  dims: [number, number, number];
  spacing_mm: [number, number, number];
  origin_mm: [number, number, number];
  value_kind: string;
}

export type Vec3 = [number, number, number];

const AXIS_INDEX: Record<Axis, number> = { x: 0, y: 1, z: 2 };

/** (col axis, row axis) of the slice image for each view axis. */
const IN_PLANE: Record<Axis, [number, number]> = {
  z: [0, 1],
  y: [0, 2],
  x: [1, 2],
};

export function sliceCount(meta: VolumeMeta, axis: Axis): number {
  return meta.dims[AXIS_INDEX[axis]];
}

export function sliceImageSize(
  meta: VolumeMeta,
  axis: Axis,
): { width: number; height: number } {
  const [colAxis, rowAxis] = IN_PLANE[axis];
  return { width: meta.dims[colAxis], height: meta.dims[rowAxis] };
}

export function voxelToMm(meta: VolumeMeta, voxel: Vec3): Vec3 {
  return [0, 1, 2].map(
    (a) => meta.origin_mm[a] + meta.spacing_mm[a] * voxel[a],
  ) as Vec3;
}

export function mmToVoxel(meta: VolumeMeta, mm: Vec3): Vec3 {
  return [0, 1, 2].map(
    (a) => (mm[a] - meta.origin_mm[a]) / meta.spacing_mm[a],
  ) as Vec3;
}

/**
 * Map a canvas click to the integer voxel under it.  `scale` is the canvas
 * zoom (canvas pixels per image pixel); clicks outside the image map to null.
 */
export function pixelToVoxel(
  meta: VolumeMeta,
  axis: Axis,
  sliceIndex: number,
  px: number,
  py: number,
  scale: number,
): Vec3 | null {
  const { width, height } = sliceImageSize(meta, axis);
  const col = Math.floor(px / scale);
  const row = Math.floor(py / scale);
  if (col < 0 || row < 0 || col >= width || row >= height) {
    return null;
  }
  const voxel: Vec3 = [0, 0, 0];
  const [colAxis, rowAxis] = IN_PLANE[axis];
  voxel[colAxis] = col;
  voxel[rowAxis] = row;
  voxel[AXIS_INDEX[axis]] = sliceIndex;
  return voxel;
}

/** Image-pixel (col,row) of an mm point projected onto the given view. */
export function mmToImage(
  meta: VolumeMeta,
  axis: Axis,
  mm: Vec3,
): { col: number; row: number } {
  const idx = mmToVoxel(meta, mm);
  const [colAxis, rowAxis] = IN_PLANE[axis];
  return { col: idx[colAxis], row: idx[rowAxis] };
}

export interface OverlaySegment {
  points: { col: number; row: number }[];
}

/**
 * Project centerline points near the displayed slice onto it.
 *
 * Points whose continuous slice coordinate is within `tolSlices` of the
 * displayed index are kept; consecutive kept points form polyline segments
 * so gaps in visibility break the stroke.
 */
export function projectPolyline(
  meta: VolumeMeta,
  axis: Axis,
  sliceIndex: number,
  pointsMm: Vec3[],
  tolSlices = 1,
): OverlaySegment[] {
  const axisIdx = AXIS_INDEX[axis];
  const segments: OverlaySegment[] = [];
  let current: { col: number; row: number }[] = [];
  // small epsilon so points exactly one slice away survive mm round-trips
  const tol = tolSlices + 1e-9;
  for (const mm of pointsMm) {
    const idx = mmToVoxel(meta, mm);
    if (Math.abs(idx[axisIdx] - sliceIndex) <= tol) {
      const [colAxis, rowAxis] = IN_PLANE[axis];
      current.push({ col: idx[colAxis], row: idx[rowAxis] });
    } else if (current.length > 0) {
      segments.push({ points: current });
      current = [];
    }
  }
  if (current.length > 0) {
    segments.push({ points: current });
  }
  return segments;
}
