/**
 * Viewer state and its pure update helpers.
 *
 * The state never holds pixel coordinates: seeds are stored in mm (as the
 * service returns them) and projected at render time.
 */

import type { Axis, Vec3, VolumeMeta } from "./geometry.js";
import type { CenterlineDoc, RunMode } from "./api.js";

export type SeedRole = "perforator-tip" | "fascia-exit" | "diea-entry";

export interface Seed {
  role: SeedRole;
  mm: Vec3;
}

export interface RunEntry {
  id: string;
  mode: RunMode;
  status: "pending" | "done" | "error";
  result: CenterlineDoc | null;
  error: string | null;
}

export interface ViewerState {
  meta: VolumeMeta | null;
  axis: Axis;
  sliceIndex: number;
  windowCenter: number;
  windowWidth: number;
  scale: number;
  seeds: Seed[];
  runs: RunEntry[];
  selectedRun: string | null;
  banner: string | null;
}

export function initialState(): ViewerState {
  return {
    meta: null,
    axis: "z",
    sliceIndex: 0,
    windowCenter: 0.5,
    windowWidth: 1.0,
    scale: 4,
    seeds: [],
    runs: [],
    selectedRun: null,
    banner: null,
  };
}

export function clampSliceIndex(state: ViewerState, index: number): number {
  if (!state.meta) return 0;
  const axisIdx = { x: 0, y: 1, z: 2 }[state.axis];
  const n = state.meta.dims[axisIdx];
  return Math.min(Math.max(0, Math.round(index)), n - 1);
}

export function withVolume(state: ViewerState, meta: VolumeMeta): ViewerState {
  const mid = Math.floor(meta.dims[2] / 2);
  const isRaw = meta.value_kind === "raw-stored";
  return {
    ...initialState(),
    meta,
    sliceIndex: mid,
    windowCenter: isRaw ? 60 : 0.5,
    windowWidth: isRaw ? 400 : 1.0,
    scale: state.scale,
  };
}

export function withSlice(state: ViewerState, index: number): ViewerState {
  return { ...state, sliceIndex: clampSliceIndex(state, index) };
}

export function withSeed(state: ViewerState, seed: Seed): ViewerState {
  return { ...state, seeds: [...state.seeds, seed] };
}

export function withoutSeed(state: ViewerState, at: number): ViewerState {
  return { ...state, seeds: state.seeds.filter((_, i) => i !== at) };
}

export function withRun(
  state: ViewerState,
  id: string,
  mode: RunMode,
): ViewerState {
  const entry: RunEntry = { id, mode, status: "pending", result: null, error: null };
  return { ...state, runs: [...state.runs, entry], selectedRun: id };
}

export function withRunStatus(
  state: ViewerState,
  id: string,
  status: RunEntry["status"],
  result: CenterlineDoc | null,
  error: string | null,
): ViewerState {
  return {
    ...state,
    runs: state.runs.map((r) =>
      r.id === id ? { ...r, status, result, error } : r,
    ),
  };
}

export function pendingRuns(state: ViewerState): RunEntry[] {
  return state.runs.filter((r) => r.status === "pending");
}

/** Seeds for a role, oldest first; run launchers consume these. */
export function seedsByRole(state: ViewerState, role: SeedRole): Seed[] {
  return state.seeds.filter((s) => s.role === role);
}
