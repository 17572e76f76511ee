// Browser entry point. Wires the DOM to the annotation service:
// upload a volume, outline the region on the central slice, scrub a
// threshold with live preview, commit, propagate, review per-slice
// results, export the session and mask files.

import { AnnotationApi, ApiError } from "./api.js";
import type { PreviewResult, PropagateResult, VolumeInfo } from "./api.js";
import { PreviewController } from "./controller.js";
import { PolygonEditor } from "./polygon.js";
import { decodeRle } from "./rle.js";
import { compositeOverlay } from "./overlay.js";
import { thresholdPolyline, areaPolyline, DEFAULT_LAYOUT } from "./chart.js";

const api = new AnnotationApi("");

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const statusEl = byId<HTMLElement>("status");
const errorEl = byId<HTMLElement>("error");
const fileInput = byId<HTMLInputElement>("volume-file");
const readerInput = byId<HTMLInputElement>("reader-id");
const canvas = byId<HTMLCanvasElement>("slice-canvas");
const sliceSlider = byId<HTMLInputElement>("slice-slider");
const sliceLabel = byId<HTMLElement>("slice-label");
const roiResetBtn = byId<HTMLButtonElement>("roi-reset");
const roiSubmitBtn = byId<HTMLButtonElement>("roi-submit");
const roiInfo = byId<HTMLElement>("roi-info");
const tSlider = byId<HTMLInputElement>("threshold-slider");
const tLabel = byId<HTMLElement>("threshold-label");
const previewInfo = byId<HTMLElement>("preview-info");
const commitBtn = byId<HTMLButtonElement>("threshold-commit");
const propagateBtn = byId<HTMLButtonElement>("propagate");
const resultInfo = byId<HTMLElement>("result-info");
const chartSvg = byId<HTMLElement>("chart");
const exportSessionBtn = byId<HTMLButtonElement>("export-session");
const exportMaskBtn = byId<HTMLButtonElement>("export-mask");

const ctx = canvas.getContext("2d") as CanvasRenderingContext2D;

interface UiState {
  volume: VolumeInfo | null;
  sessionId: string | null;
  currentSlice: number;
  baseGray: Uint8Array | null; // grayscale of the slice on screen
  editor: PolygonEditor;
  roiCommitted: boolean;
  previewMask: Uint8Array | null;
  lastPreviewT: number | null;
  result: PropagateResult | null;
  sliceMasks: Map<number, Uint8Array>;
}

const ui: UiState = {
  volume: null,
  sessionId: null,
  currentSlice: 0,
  baseGray: null,
  editor: new PolygonEditor(),
  roiCommitted: false,
  previewMask: null,
  lastPreviewT: null,
  result: null,
  sliceMasks: new Map(),
};

function setStatus(msg: string): void {
  statusEl.textContent = msg;
}

function setError(msg: string): void {
  errorEl.textContent = msg;
}

function clearError(): void {
  errorEl.textContent = "";
}

function reportError(err: unknown): void {
  if (err instanceof ApiError) {
    setError(`${err.status}: ${err.message}`);
  } else {
    setError(String(err));
  }
}

async function loadSliceGray(volumeId: string, sliceIndex: number): Promise<Uint8Array> {
  const img = new Image();
  img.src = api.sliceUrl(volumeId, sliceIndex);
  await img.decode();
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const scratch = document.createElement("canvas");
  scratch.width = img.naturalWidth;
  scratch.height = img.naturalHeight;
  const sctx = scratch.getContext("2d") as CanvasRenderingContext2D;
  sctx.drawImage(img, 0, 0);
  const rgba = sctx.getImageData(0, 0, scratch.width, scratch.height).data;
  const gray = new Uint8Array(scratch.width * scratch.height);
  for (let i = 0; i < gray.length; i++) gray[i] = rgba[i * 4] ?? 0;
  return gray;
}

function drawPolygon(): void {
  const verts = ui.editor.vertices;
  if (verts.length === 0) return;
  ctx.save();
  ctx.strokeStyle = "#3ad";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  const [x0, y0] = verts[0] as [number, number];
  ctx.moveTo(x0 + 0.5, y0 + 0.5);
  for (let i = 1; i < verts.length; i++) {
    const [x, y] = verts[i] as [number, number];
    ctx.lineTo(x + 0.5, y + 0.5);
  }
  if (ui.editor.isClosed) ctx.closePath();
  ctx.stroke();
  ctx.fillStyle = "#3ad";
  for (const [x, y] of verts) {
    ctx.beginPath();
    ctx.arc(x + 0.5, y + 0.5, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.restore();
}

function redraw(): void {
  if (!ui.baseGray || !ui.volume) return;
  const onCentral = ui.currentSlice === ui.volume.central_index;
  let mask: Uint8Array | null = null;
  if (ui.result) {
    mask = ui.sliceMasks.get(ui.currentSlice) ?? null;
  } else if (onCentral && ui.previewMask) {
    mask = ui.previewMask;
  }
  const rgba = mask
    ? compositeOverlay(ui.baseGray, mask)
    : compositeOverlay(ui.baseGray, new Uint8Array(ui.baseGray.length));
  ctx.putImageData(new ImageData(rgba, canvas.width, canvas.height), 0, 0);
  if (onCentral && !ui.result) drawPolygon();
}

async function showSlice(sliceIndex: number): Promise<void> {
  if (!ui.volume) return;
  ui.currentSlice = sliceIndex;
  sliceLabel.textContent = `slice ${sliceIndex} / ${ui.volume.n_slices - 1}${
    sliceIndex === ui.volume.central_index ? " (central)" : ""
  }`;
  ui.baseGray = await loadSliceGray(ui.volume.volume_id, sliceIndex);
  if (ui.result && ui.sessionId && !ui.sliceMasks.has(sliceIndex)) {
    const payload = await api.maskSlice(ui.sessionId, sliceIndex);
    ui.sliceMasks.set(sliceIndex, decodeRle(payload.runs, payload.rows, payload.cols));
  }
  redraw();
}

const previews = new PreviewController(
  (t) => {
    if (!ui.sessionId) return Promise.reject(new Error("no session"));
    return api.preview(ui.sessionId, t);
  },
  {
    apply(t: number, result: PreviewResult) {
      const { rows, cols, runs } = result.mask_rle_central;
      ui.previewMask = decodeRle(runs, rows, cols);
      ui.lastPreviewT = t;
      previewInfo.textContent = `t=${t.toFixed(3)} area ${result.area_px} px (${result.area_mm2.toFixed(1)} mm2)`;
      redraw();
    },
    error(_t: number, err: unknown) {
      reportError(err);
    },
  },
);

function resetDownstream(): void {
  ui.previewMask = null;
  ui.lastPreviewT = null;
  ui.result = null;
  ui.sliceMasks.clear();
  previews.cancel();
  previewInfo.textContent = "";
  resultInfo.textContent = "";
  chartSvg.innerHTML = "";
  commitBtn.disabled = true;
  propagateBtn.disabled = true;
  exportSessionBtn.disabled = true;
  exportMaskBtn.disabled = true;
}

fileInput.addEventListener("change", async () => {
  clearError();
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    setStatus("uploading volume...");
    const bytes = new Uint8Array(await file.arrayBuffer());
    ui.volume = await api.uploadVolume(bytes);
    const created = await api.createSession(
      ui.volume.volume_id,
      readerInput.value.trim() || "reader-1",
    );
    ui.sessionId = created.session_id;
    ui.editor.reset();
    ui.roiCommitted = false;
    resetDownstream();
    ui.sliceMasks.clear();
    sliceSlider.min = "0";
    sliceSlider.max = String(ui.volume.n_slices - 1);
    sliceSlider.value = String(ui.volume.central_index);
    tSlider.disabled = true;
    roiSubmitBtn.disabled = false;
    setStatus(
      `volume ${ui.volume.volume_id}: ${ui.volume.n_slices} slices of ` +
        `${ui.volume.rows}x${ui.volume.cols}; outline the region on the central slice`,
    );
    await showSlice(ui.volume.central_index);
  } catch (err) {
    reportError(err);
    setStatus("");
  }
});

function canvasPoint(ev: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width - 0.5,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height - 0.5,
  };
}

let dragging = false;

canvas.addEventListener("mousedown", (ev) => {
  if (!ui.volume || ui.currentSlice !== ui.volume.central_index || ui.result) return;
  if (ui.editor.isClosed && ui.editor.beginDrag(canvasPoint(ev))) {
    dragging = true;
  }
});

canvas.addEventListener("mousemove", (ev) => {
  if (dragging && ui.editor.drag(canvasPoint(ev))) redraw();
});

canvas.addEventListener("mouseup", () => {
  if (dragging) {
    dragging = false;
    ui.editor.endDrag();
    ui.roiCommitted = false; // reshaped; must resubmit
    roiInfo.textContent = "outline changed; submit again";
  }
});

canvas.addEventListener("click", (ev) => {
  if (!ui.volume || ui.currentSlice !== ui.volume.central_index || ui.result) return;
  if (ui.editor.isClosed) return; // clicks only matter while drawing
  clearError();
  const outcome = ui.editor.click(canvasPoint(ev));
  if (outcome !== "added" && outcome !== "closed") {
    setError(outcome);
  } else if (outcome === "closed") {
    roiInfo.textContent = "outline closed; submit it or drag vertices";
  }
  redraw();
});

roiResetBtn.addEventListener("click", () => {
  ui.editor.reset();
  ui.roiCommitted = false;
  roiInfo.textContent = "";
  resetDownstream();
  tSlider.disabled = true;
  redraw();
});

roiSubmitBtn.addEventListener("click", async () => {
  clearError();
  if (!ui.sessionId) return;
  if (!ui.editor.isClosed) {
    setError("close the outline first (click near the first vertex)");
    return;
  }
  try {
    const res = await api.setRoi(ui.sessionId, ui.editor.vertices as [number, number][]);
    ui.roiCommitted = true;
    resetDownstream();
    roiInfo.textContent = `region: ${res.roi_area_px} px (${res.roi_area_mm2.toFixed(1)} mm2)`;
    tSlider.disabled = false;
    commitBtn.disabled = false;
    previews.request(Number(tSlider.value));
  } catch (err) {
    reportError(err);
  }
});

tSlider.addEventListener("input", () => {
  const t = Number(tSlider.value);
  tLabel.textContent = t.toFixed(3);
  if (ui.roiCommitted && !ui.result) previews.scrub(t);
});

commitBtn.addEventListener("click", async () => {
  clearError();
  if (!ui.sessionId) return;
  try {
    const t = Number(tSlider.value);
    const res = await api.commitThreshold(ui.sessionId, t);
    previewInfo.textContent = `committed t=${t.toFixed(3)}, reference ${res.reference_area_px} px`;
    propagateBtn.disabled = false;
    exportSessionBtn.disabled = false;
  } catch (err) {
    reportError(err);
  }
});

function renderChart(result: PropagateResult): void {
  const { width, height } = DEFAULT_LAYOUT;
  chartSvg.innerHTML =
    `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    `<polyline points="${thresholdPolyline(result.per_slice)}" ` +
    `fill="none" stroke="#3ad" stroke-width="1.5"/>` +
    `<polyline points="${areaPolyline(result.per_slice)}" ` +
    `fill="none" stroke="#e73" stroke-width="1.5"/>` +
    `</svg>` +
    `<div>blue: per-slice threshold (0..1) &nbsp; orange: per-slice area</div>`;
}

propagateBtn.addEventListener("click", async () => {
  clearError();
  if (!ui.sessionId) return;
  try {
    setStatus("propagating...");
    const result = await api.propagate(ui.sessionId);
    ui.result = result;
    ui.sliceMasks.clear();
    resultInfo.textContent =
      `dense tissue: ${(100 * result.percent_density).toFixed(2)}% of the region across ` +
      `${result.per_slice.length} slices`;
    renderChart(result);
    exportMaskBtn.disabled = false;
    setStatus("done; scrub slices to review the mask");
    await showSlice(ui.currentSlice);
  } catch (err) {
    reportError(err);
    setStatus("");
  }
});

sliceSlider.addEventListener("input", () => {
  void showSlice(Number(sliceSlider.value)).catch(reportError);
});

function download(name: string, data: BlobPart, type: string): void {
  const blob = new Blob([data], { type });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

exportSessionBtn.addEventListener("click", async () => {
  if (!ui.sessionId) return;
  try {
    download(`${ui.sessionId}.session`, await api.exportSession(ui.sessionId), "text/plain");
  } catch (err) {
    reportError(err);
  }
});

exportMaskBtn.addEventListener("click", async () => {
  if (!ui.sessionId) return;
  try {
    const bytes = await api.exportMask(ui.sessionId);
    download(`${ui.sessionId}.dbtmask`, bytes.buffer as ArrayBuffer, "application/octet-stream");
  } catch (err) {
    reportError(err);
  }
});

setStatus("choose a volume file to begin");
