/**
 * REST client for the vesseltrace service.
 *
 * Request documents are built by pure functions so tests can assert the
 * exact payload shapes the service contract expects; `ApiClient` adds the
 * fetch plumbing on top.
 */

import type { Axis, Vec3, VolumeMeta } from "./geometry.js";

export type RunMode = "track" | "minpath";

export interface RunStatus {
  status: "pending" | "done" | "error";
  result: CenterlineDoc | null;
  error: string | null;
}

export interface CenterlineDoc {
  points_mm: Vec3[];
  directions: Vec3[];
  vesselness: number[];
  termination: string;
  total_cost?: number;
  expanded_nodes?: number;
}

export interface TrackParams {
  seed_mm: Vec3;
  direction?: Vec3;
  seed2_mm?: Vec3;
  frangi?: { preset?: string };
}

export interface MinpathParams {
  start_mm: Vec3;
  goal_mm: Vec3;
  frangi?: { preset?: string };
  sigmoid?: { a_s?: number; b_s?: number };
}

export function buildVolumeRequest(path: string) {
  return { url: "/volumes", body: { path } };
}

export function buildSeedsRequest(
  sessionId: string,
  name: string,
  kind: "subcutaneous" | "intramuscular",
  pointsMm: Vec3[],
) {
  return {
    url: `/volumes/${sessionId}/seeds`,
    body: { name, kind, points_mm: pointsMm },
  };
}

export function buildRunRequest(
  sessionId: string,
  mode: RunMode,
  params: TrackParams | MinpathParams,
) {
  return { url: "/runs", body: { session_id: sessionId, mode, params } };
}

export function sliceUrl(
  sessionId: string,
  axis: Axis,
  index: number,
  wc?: number,
  ww?: number,
): string {
  let url = `/volumes/${sessionId}/slice?axis=${axis}&index=${index}`;
  if (wc !== undefined) url += `&wc=${wc}`;
  if (ww !== undefined) url += `&ww=${ww}`;
  return url;
}

async function asJson(response: Response): Promise<any> {
  if (!response.ok) {
    let detail = `${response.status}`;
    try {
      const doc = await response.json();
      if (doc && doc.detail) detail = `${doc.detail}`;
    } catch {
      // keep the status code
    }
    throw new Error(detail);
  }
  return response.json();
}

export class ApiClient {
  private fetchFn: typeof fetch;

  constructor(fetchFn: typeof fetch = fetch.bind(globalThis)) {
    this.fetchFn = fetchFn;
  }

  private async post(url: string, body: unknown): Promise<any> {
    const response = await this.fetchFn(url, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return asJson(response);
  }

  async loadVolume(path: string): Promise<VolumeMeta> {
    const { url, body } = buildVolumeRequest(path);
    return this.post(url, body);
  }

  async postSeeds(
    sessionId: string,
    name: string,
    kind: "subcutaneous" | "intramuscular",
    pointsMm: Vec3[],
  ): Promise<string> {
    const { url, body } = buildSeedsRequest(sessionId, name, kind, pointsMm);
    const doc = await this.post(url, body);
    return doc.seed_set_id;
  }

  async getSeeds(sessionId: string, seedSetId: string): Promise<any> {
    const response = await this.fetchFn(
      `/volumes/${sessionId}/seeds/${seedSetId}`,
    );
    return asJson(response);
  }

  async launchRun(
    sessionId: string,
    mode: RunMode,
    params: TrackParams | MinpathParams,
  ): Promise<string> {
    const { url, body } = buildRunRequest(sessionId, mode, params);
    const doc = await this.post(url, body);
    return doc.run_id;
  }

  async getRun(runId: string): Promise<RunStatus> {
    const response = await this.fetchFn(`/runs/${runId}`);
    return asJson(response);
  }
}
