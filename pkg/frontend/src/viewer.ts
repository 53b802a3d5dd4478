/**
 * Canvas rendering: the slice image from the service, seed markers, and
 * centerline overlays projected onto the displayed slice.
 */

import { sliceUrl } from "./api.js";
import {
  mmToImage,
  mmToVoxel,
  projectPolyline,
  sliceImageSize,
  type Vec3,
} from "./geometry.js";
import type { Seed, ViewerState } from "./state.js";

const SEED_COLORS: Record<string, string> = {
  "perforator-tip": "#ffcc00",
  "fascia-exit": "#00ccff",
  "diea-entry": "#ff66aa",
};

const OVERLAY_COLOR = "#33ff66";

export class SliceViewer {
  private canvas: HTMLCanvasElement;
  private image: HTMLImageElement;
  private lastUrl = "";

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    this.image = new Image();
  }

  /** Fetch the slice image if needed, then draw everything. */
  render(state: ViewerState): void {
    if (!state.meta) return;
    const url = sliceUrl(
      state.meta.session_id,
      state.axis,
      state.sliceIndex,
      state.windowCenter,
      state.windowWidth,
    );
    if (url !== this.lastUrl) {
      this.lastUrl = url;
      this.image = new Image();
      this.image.onload = () => this.draw(state);
      this.image.src = url;
    } else {
      this.draw(state);
    }
  }

  private draw(state: ViewerState): void {
    const meta = state.meta;
    if (!meta) return;
    const { width, height } = sliceImageSize(meta, state.axis);
    this.canvas.width = width * state.scale;
    this.canvas.height = height * state.scale;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image.complete && this.image.naturalWidth > 0) {
      ctx.drawImage(this.image, 0, 0, this.canvas.width, this.canvas.height);
    }
    this.drawOverlays(ctx, state);
    this.drawSeeds(ctx, state);
  }

  private drawOverlays(ctx: CanvasRenderingContext2D, state: ViewerState): void {
    const meta = state.meta;
    if (!meta) return;
    for (const run of state.runs) {
      if (run.status !== "done" || !run.result) continue;
      const selected = run.id === state.selectedRun;
      const segments = projectPolyline(
        meta,
        state.axis,
        state.sliceIndex,
        run.result.points_mm as Vec3[],
      );
      ctx.strokeStyle = OVERLAY_COLOR;
      ctx.globalAlpha = selected ? 1.0 : 0.45;
      ctx.lineWidth = selected ? 2.0 : 1.0;
      for (const seg of segments) {
        if (seg.points.length === 1) {
          const p = seg.points[0];
          ctx.beginPath();
          ctx.arc(
            (p.col + 0.5) * state.scale,
            (p.row + 0.5) * state.scale,
            2,
            0,
            2 * Math.PI,
          );
          ctx.stroke();
          continue;
        }
        ctx.beginPath();
        seg.points.forEach((p, i) => {
          const x = (p.col + 0.5) * state.scale;
          const y = (p.row + 0.5) * state.scale;
          if (i === 0) ctx.moveTo(x, y);
          else ctx.lineTo(x, y);
        });
        ctx.stroke();
      }
      ctx.globalAlpha = 1.0;
    }
  }

  private drawSeeds(ctx: CanvasRenderingContext2D, state: ViewerState): void {
    const meta = state.meta;
    if (!meta) return;
    const axisIdx = { x: 0, y: 1, z: 2 }[state.axis];
    state.seeds.forEach((seed: Seed) => {
      const idx = mmToVoxel(meta, seed.mm);
      if (Math.abs(idx[axisIdx] - state.sliceIndex) > 1) return;
      const { col, row } = mmToImage(meta, state.axis, seed.mm);
      const x = (col + 0.5) * state.scale;
      const y = (row + 0.5) * state.scale;
      ctx.strokeStyle = SEED_COLORS[seed.role] ?? "#ffffff";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(x - 5, y);
      ctx.lineTo(x + 5, y);
      ctx.moveTo(x, y - 5);
      ctx.lineTo(x, y + 5);
      ctx.stroke();
    });
  }
}
