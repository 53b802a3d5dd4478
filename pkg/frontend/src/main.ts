/**
 * Application wiring: DOM controls, seed placement, run launching, and the
 * 250 ms poll loop that overlays results as they complete.
 */

import { ApiClient } from "./api.js";
import { pixelToVoxel, voxelToMm, type Vec3 } from "./geometry.js";
import {
  initialState,
  pendingRuns,
  seedsByRole,
  withRun,
  withRunStatus,
  withSeed,
  withSlice,
  withVolume,
  withoutSeed,
  type SeedRole,
  type ViewerState,
} from "./state.js";
import { SliceViewer } from "./viewer.js";

const POLL_MS = 250;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private api = new ApiClient();
  private state: ViewerState = initialState();
  private viewer: SliceViewer;
  private polling = false;

  constructor() {
    this.viewer = new SliceViewer(el<HTMLCanvasElement>("slice-canvas"));
    this.bind();
    window.setInterval(() => this.poll(), POLL_MS);
  }

  private setState(next: ViewerState): void {
    this.state = next;
    this.sync();
  }

  private banner(message: string | null): void {
    this.state = { ...this.state, banner: message };
    const bar = el<HTMLDivElement>("banner");
    bar.textContent = message ?? "";
    bar.className = message ? "banner visible" : "banner";
  }

  private bind(): void {
    el<HTMLButtonElement>("load-btn").addEventListener("click", () => {
      void this.loadVolume();
    });
    el<HTMLInputElement>("slice-slider").addEventListener("input", (e) => {
      const v = Number((e.target as HTMLInputElement).value);
      this.setState(withSlice(this.state, v));
    });
    el<HTMLSelectElement>("axis-select").addEventListener("change", (e) => {
      const axis = (e.target as HTMLSelectElement).value as "x" | "y" | "z";
      this.setState(withSlice({ ...this.state, axis }, this.state.sliceIndex));
    });
    for (const key of ["wc", "ww"] as const) {
      el<HTMLInputElement>(`${key}-input`).addEventListener("change", (e) => {
        const v = Number((e.target as HTMLInputElement).value);
        if (!Number.isFinite(v)) return;
        this.setState(
          key === "wc"
            ? { ...this.state, windowCenter: v }
            : { ...this.state, windowWidth: v },
        );
      });
    }
    el<HTMLCanvasElement>("slice-canvas").addEventListener("click", (e) => {
      this.placeSeed(e);
    });
    el<HTMLButtonElement>("run-track-btn").addEventListener("click", () => {
      void this.launchTrack();
    });
    el<HTMLButtonElement>("run-minpath-btn").addEventListener("click", () => {
      void this.launchMinpath();
    });
  }

  private async loadVolume(): Promise<void> {
    const path = el<HTMLInputElement>("volume-path").value.trim();
    if (!path) return;
    try {
      const meta = await this.api.loadVolume(path);
      this.setState(withVolume(this.state, meta));
      this.banner(null);
    } catch (err) {
      this.banner(`failed to load volume: ${(err as Error).message}`);
    }
  }

  private placeSeed(e: MouseEvent): void {
    const meta = this.state.meta;
    if (!meta) return;
    const canvas = el<HTMLCanvasElement>("slice-canvas");
    const rect = canvas.getBoundingClientRect();
    const voxel = pixelToVoxel(
      meta,
      this.state.axis,
      this.state.sliceIndex,
      e.clientX - rect.left,
      e.clientY - rect.top,
      this.state.scale,
    );
    if (!voxel) return; // clicks outside the image are ignored
    const role = el<HTMLSelectElement>("seed-role").value as SeedRole;
    const mm = voxelToMm(meta, voxel);
    void this.submitSeed(role, mm);
  }

  private async submitSeed(role: SeedRole, mm: Vec3): Promise<void> {
    const meta = this.state.meta;
    if (!meta) return;
    try {
      const kind = role === "perforator-tip" ? "subcutaneous" : "intramuscular";
      await this.api.postSeeds(meta.session_id, role, kind, [mm]);
      this.setState(withSeed(this.state, { role, mm }));
      this.banner(null);
    } catch (err) {
      this.banner(`seed rejected: ${(err as Error).message}`);
    }
  }

  private async launchTrack(): Promise<void> {
    const meta = this.state.meta;
    if (!meta) return;
    const tips = seedsByRole(this.state, "perforator-tip");
    if (tips.length < 2) {
      this.banner("track needs two perforator-tip seeds (start + direction)");
      return;
    }
    const [a, b] = tips.slice(-2);
    try {
      const id = await this.api.launchRun(meta.session_id, "track", {
        seed_mm: a.mm,
        seed2_mm: b.mm,
        frangi: { preset: "subcutaneous" },
      });
      this.setState(withRun(this.state, id, "track"));
      this.banner(null);
    } catch (err) {
      this.banner(`run failed to start: ${(err as Error).message}`);
    }
  }

  private async launchMinpath(): Promise<void> {
    const meta = this.state.meta;
    if (!meta) return;
    const exits = seedsByRole(this.state, "fascia-exit");
    const entries = seedsByRole(this.state, "diea-entry");
    if (exits.length < 1 || entries.length < 1) {
      this.banner("minpath needs a fascia-exit and a diea-entry seed");
      return;
    }
    try {
      const id = await this.api.launchRun(meta.session_id, "minpath", {
        start_mm: exits[exits.length - 1].mm,
        goal_mm: entries[entries.length - 1].mm,
        frangi: { preset: "intramuscular" },
        sigmoid: { a_s: 45.0, b_s: 0.6 },
      });
      this.setState(withRun(this.state, id, "minpath"));
      this.banner(null);
    } catch (err) {
      this.banner(`run failed to start: ${(err as Error).message}`);
    }
  }

  private async poll(): Promise<void> {
    if (this.polling) return;
    const pending = pendingRuns(this.state);
    if (pending.length === 0) return;
    this.polling = true;
    try {
      for (const run of pending) {
        try {
          const doc = await this.api.getRun(run.id);
          if (doc.status !== "pending") {
            this.setState(
              withRunStatus(this.state, run.id, doc.status, doc.result, doc.error),
            );
            if (doc.status === "error") {
              this.banner(`run ${run.id}: ${doc.error}`);
            }
          }
        } catch (err) {
          this.banner(`service unreachable: ${(err as Error).message}`);
        }
      }
    } finally {
      this.polling = false;
    }
  }

  private sync(): void {
    const meta = this.state.meta;
    const slider = el<HTMLInputElement>("slice-slider");
    if (meta) {
      const axisIdx = { x: 0, y: 1, z: 2 }[this.state.axis];
      slider.max = String(meta.dims[axisIdx] - 1);
      slider.value = String(this.state.sliceIndex);
      el<HTMLSpanElement>("slice-label").textContent =
        `${this.state.axis}=${this.state.sliceIndex}`;
    }
    const list = el<HTMLUListElement>("seed-list");
    list.innerHTML = "";
    this.state.seeds.forEach((seed, i) => {
      const item = document.createElement("li");
      const mm = seed.mm.map((c) => c.toFixed(1)).join(", ");
      item.textContent = `${seed.role} (${mm}) `;
      const remove = document.createElement("button");
      remove.textContent = "x";
      remove.addEventListener("click", () => {
        this.setState(withoutSeed(this.state, i));
      });
      item.appendChild(remove);
      list.appendChild(item);
    });
    const runs = el<HTMLUListElement>("run-list");
    runs.innerHTML = "";
    this.state.runs.forEach((run) => {
      const item = document.createElement("li");
      item.textContent = `${run.id} [${run.mode}] ${run.status}`;
      if (run.id === this.state.selectedRun) item.className = "selected";
      item.addEventListener("click", () => {
        this.setState({ ...this.state, selectedRun: run.id });
      });
      runs.appendChild(item);
    });
    this.viewer.render(this.state);
  }
}

document.addEventListener("DOMContentLoaded", () => {
  new App();
});
