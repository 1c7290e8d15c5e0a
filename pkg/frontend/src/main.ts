/**
 * Editor wiring: composite upload, two paintable mask layers, harmonize
 * submit, A/B wipe against the direct composite, r1/r2 blend sliders, and a
 * replayable session history. The composite bitmap itself is never touched;
 * every edit lives in a mask layer.
 */

import { ServiceClient, ServiceError, type HarmonizePayload, type ServiceResult } from "./api.js";
import { debounce, SLIDER_DEBOUNCE_MS } from "./debounce.js";
import { SessionHistory, type HistoryEntry } from "./history.js";
import { MaskLayer, type Point } from "./maskLayer.js";
import { encodeGrayPng } from "./png.js";
import { attachWipe, type WipeHandles } from "./wipe.js";

type Tool = "brush" | "eraser" | "rect" | "polygon";
type LayerName = "foreground" | "reference";

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
};

// same-origin by default; ?api=http://host:port points at a service elsewhere
const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";
const client = new ServiceClient(apiBase);
const history = new SessionHistory();

let compositeFile: File | null = null;
let imageWidth = 0;
let imageHeight = 0;
let fgLayer: MaskLayer | null = null;
let refLayer: MaskLayer | null = null;

let tool: Tool = "brush";
let activeLayer: LayerName = "foreground";
let brushRadius = 12;
let polygonVertices: Point[] = [];
let strokePoints: Point[] = [];
let rectStart: Point | null = null;
let painting = false;

let lastPlainResult: ServiceResult | null = null;
let lastPayload: HarmonizePayload | null = null;
let wipe: WipeHandles | null = null;

const banner = el<HTMLDivElement>("banner");
const baseCanvas = el<HTMLCanvasElement>("composite-canvas");
const overlayCanvas = el<HTMLCanvasElement>("overlay-canvas");
const resultImg = el<HTMLImageElement>("result-image");
const directImg = el<HTMLImageElement>("direct-image");
const runLabel = el<HTMLSpanElement>("run-label");
const historyList = el<HTMLUListElement>("history-list");

function showError(message: string): void {
  banner.textContent = message;
  banner.classList.add("visible");
}

function clearError(): void {
  banner.textContent = "";
  banner.classList.remove("visible");
}

async function loadComposite(file: File): Promise<void> {
  const bitmap = await createImageBitmap(file);
  compositeFile = file;
  imageWidth = bitmap.width;
  imageHeight = bitmap.height;
  fgLayer = new MaskLayer(imageWidth, imageHeight);
  refLayer = new MaskLayer(imageWidth, imageHeight);
  for (const canvas of [baseCanvas, overlayCanvas]) {
    canvas.width = imageWidth;
    canvas.height = imageHeight;
  }
  baseCanvas.getContext("2d")!.drawImage(bitmap, 0, 0);
  directImg.src = URL.createObjectURL(file);
  polygonVertices = [];
  redrawOverlay();
  clearError();
}

function layerFor(name: LayerName): MaskLayer | null {
  return name === "foreground" ? fgLayer : refLayer;
}

function redrawOverlay(): void {
  const ctx = overlayCanvas.getContext("2d")!;
  ctx.clearRect(0, 0, imageWidth, imageHeight);
  if (!fgLayer || !refLayer) return;
  const img = ctx.createImageData(imageWidth, imageHeight);
  for (let i = 0; i < imageWidth * imageHeight; i++) {
    const fg = fgLayer.data[i] !== 0;
    const ref = refLayer.data[i] !== 0;
    if (!fg && !ref) continue;
    // foreground in orange, reference in cyan, overlap blended
    img.data[i * 4 + 0] = fg ? 240 : 40;
    img.data[i * 4 + 1] = fg ? (ref ? 180 : 120) : 190;
    img.data[i * 4 + 2] = ref ? 220 : 30;
    img.data[i * 4 + 3] = 110;
  }
  ctx.putImageData(img, 0, 0);
  if (polygonVertices.length > 0) {
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = Math.max(1, imageWidth / 400);
    ctx.beginPath();
    ctx.moveTo(polygonVertices[0].x, polygonVertices[0].y);
    for (const v of polygonVertices.slice(1)) ctx.lineTo(v.x, v.y);
    ctx.stroke();
  }
}

/** Screen-space pointer position to image pixels; painting ignores zoom. */
function toImagePoint(ev: PointerEvent): Point {
  const rect = overlayCanvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * imageWidth,
    y: ((ev.clientY - rect.top) / rect.height) * imageHeight,
  };
}

function onPointerDown(ev: PointerEvent): void {
  const layer = layerFor(activeLayer);
  if (!layer) return;
  const p = toImagePoint(ev);
  if (tool === "polygon") {
    polygonVertices.push(p);
    redrawOverlay();
    return;
  }
  painting = true;
  overlayCanvas.setPointerCapture(ev.pointerId);
  if (tool === "rect") {
    rectStart = p;
  } else {
    strokePoints = [p];
    layer.paintBrush([p], brushRadius, tool === "eraser");
    redrawOverlay();
  }
}

function onPointerMove(ev: PointerEvent): void {
  if (!painting) return;
  const layer = layerFor(activeLayer);
  if (!layer) return;
  const p = toImagePoint(ev);
  if (tool === "rect") return; // committed on release
  strokePoints.push(p);
  layer.paintBrush(strokePoints.slice(-2), brushRadius, tool === "eraser");
  redrawOverlay();
}

function onPointerUp(ev: PointerEvent): void {
  if (!painting) return;
  painting = false;
  const layer = layerFor(activeLayer);
  if (!layer) return;
  if (tool === "rect" && rectStart) {
    const p = toImagePoint(ev);
    layer.fillRect(rectStart.x, rectStart.y, p.x, p.y);
    rectStart = null;
    redrawOverlay();
  }
  strokePoints = [];
}

function closePolygon(): void {
  const layer = layerFor(activeLayer);
  if (layer && polygonVertices.length >= 3) {
    layer.fillPolygon(polygonVertices, tool === "eraser");
  }
  polygonVertices = [];
  redrawOverlay();
}

function currentPayload(): HarmonizePayload | null {
  if (!compositeFile || !fgLayer || !refLayer) {
    showError("load a composite first");
    return null;
  }
  if (fgLayer.isEmpty()) {
    showError("paint a foreground mask before harmonizing");
    return null;
  }
  const fgPng = encodeGrayPng(imageWidth, imageHeight, fgLayer.data);
  const refEmpty = refLayer.isEmpty();
  const guidePng = refEmpty ? null : encodeGrayPng(imageWidth, imageHeight, refLayer.data);
  runLabel.textContent = refEmpty ? "auto (whole background)" : "reference region";
  return {
    composite: compositeFile,
    fgMask: { bytes: fgPng, name: "fg_mask.png" },
    guideMask: guidePng ? { bytes: guidePng, name: "guide_mask.png" } : null,
  };
}

function renderResult(result: ServiceResult): void {
  const blob = new Blob([result.bytes], { type: "image/png" });
  resultImg.src = URL.createObjectURL(blob);
  if (!wipe) {
    wipe = attachWipe(el("compare"), resultImg, el("divider"));
  }
}

function pushHistory(label: string, payload: HarmonizePayload, ratios: HistoryEntry["ratios"], result: ServiceResult): void {
  const index = history.push({
    label,
    fgMaskPng: payload.fgMask.bytes,
    guideMaskPng: payload.guideMask ? payload.guideMask.bytes : null,
    ratios,
    resultPng: result.bytes,
    latencyMs: result.meta.latencyMs,
  });
  const item = document.createElement("li");
  const button = document.createElement("button");
  button.textContent = `${index}: ${label} (${result.meta.latencyMs.toFixed(0)} ms)`;
  button.addEventListener("click", () => void replay(index));
  item.appendChild(button);
  historyList.appendChild(item);
}

async function replay(index: number): Promise<void> {
  if (!compositeFile) return;
  const entry = history.get(index);
  const payload: HarmonizePayload = {
    composite: compositeFile,
    fgMask: { bytes: entry.fgMaskPng, name: "fg_mask.png" },
    guideMask: entry.guideMaskPng ? { bytes: entry.guideMaskPng, name: "guide_mask.png" } : null,
  };
  try {
    const result = entry.ratios
      ? await client.colorTransfer(payload, entry.ratios.r1, entry.ratios.r2)
      : await client.harmonize(payload);
    if (result) renderResult(result);
  } catch (err) {
    showError(err instanceof ServiceError ? err.message : String(err));
  }
}

async function submitHarmonize(): Promise<void> {
  const payload = currentPayload();
  if (!payload) return;
  clearError();
  try {
    const result = await client.harmonize(payload);
    if (!result) return; // superseded by a newer submit
    lastPlainResult = result;
    lastPayload = payload;
    renderResult(result);
    pushHistory(payload.guideMask ? "harmonize" : "harmonize, auto reference", payload, null, result);
  } catch (err) {
    showError(err instanceof ServiceError ? `${err.status}: ${err.message}` : String(err));
  }
}

const submitBlend = debounce(async (r1: number, r2: number) => {
  const payload = lastPayload ?? currentPayload();
  if (!payload) return;
  try {
    const result = await client.colorTransfer(payload, r1, r2);
    if (!result) return;
    renderResult(result);
    pushHistory(`blend r1=${r1.toFixed(2)} r2=${r2.toFixed(2)}`, payload, { r1, r2 }, result);
  } catch (err) {
    showError(err instanceof ServiceError ? `${err.status}: ${err.message}` : String(err));
  }
}, SLIDER_DEBOUNCE_MS);

function wireControls(): void {
  el<HTMLInputElement>("file-input").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void loadComposite(file);
  });

  for (const t of ["brush", "eraser", "rect", "polygon"] as Tool[]) {
    el<HTMLInputElement>(`tool-${t}`).addEventListener("change", () => {
      if (tool === "polygon" && t !== "polygon") closePolygon();
      tool = t;
    });
  }
  for (const layer of ["foreground", "reference"] as LayerName[]) {
    el<HTMLInputElement>(`layer-${layer}`).addEventListener("change", () => {
      activeLayer = layer;
    });
  }
  el<HTMLInputElement>("brush-size").addEventListener("input", (ev) => {
    brushRadius = Number((ev.target as HTMLInputElement).value);
  });
  el<HTMLButtonElement>("clear-layer").addEventListener("click", () => {
    layerFor(activeLayer)?.clear();
    redrawOverlay();
  });
  el<HTMLButtonElement>("fill-layer").addEventListener("click", () => {
    layerFor(activeLayer)?.fillAll();
    redrawOverlay();
  });
  el<HTMLButtonElement>("close-polygon").addEventListener("click", closePolygon);
  el<HTMLButtonElement>("harmonize").addEventListener("click", () => void submitHarmonize());

  const r1 = el<HTMLInputElement>("r1");
  const r2 = el<HTMLInputElement>("r2");
  const onSlide = () => {
    if (!lastPlainResult) return; // blending applies to a finished harmonize
    submitBlend(Number(r1.value), Number(r2.value));
  };
  r1.addEventListener("input", onSlide);
  r2.addEventListener("input", onSlide);

  overlayCanvas.addEventListener("pointerdown", onPointerDown);
  overlayCanvas.addEventListener("pointermove", onPointerMove);
  overlayCanvas.addEventListener("pointerup", onPointerUp);
  overlayCanvas.addEventListener("dblclick", () => {
    if (tool === "polygon") closePolygon();
  });
}

wireControls();
void client.health().then(
  (h) => {
    if (!h.weights_loaded) showError("service is up but no weights are loaded");
  },
  () => showError("cannot reach the harmonization service"),
);
