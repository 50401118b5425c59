// Drawing surface + live retrieval feedback, wired to the service API.

import { HttpRetrievalApi, StrokeResponse } from "./api.js";
import { captureStroke, Point } from "./geometry.js";
import { UiSession } from "./session.js";

const RASTER = 64;

const api = new HttpRetrievalApi("");
const canvas = document.getElementById("draw") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const gallery = document.getElementById("gallery")!;
const spark = document.getElementById("spark") as HTMLCanvasElement;
const sparkCtx = spark.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const overlayBtn = document.getElementById("overlay-toggle")!;
const undoBtn = document.getElementById("undo")!;
const clearBtn = document.getElementById("clear")!;
const targetSelect = document.getElementById("target") as HTMLSelectElement;

let session = newSession();

function newSession(targetId?: string): UiSession {
  return new UiSession(api, renderFeedback, (err) => toast(String(err)), targetId);
}

function toast(message: string): void {
  statusEl.textContent = message;
  statusEl.classList.add("error");
  setTimeout(() => statusEl.classList.remove("error"), 2500);
}

// ---------------------------------------------------------------------------
// stroke capture
// ---------------------------------------------------------------------------

let drawing = false;
let samples: Point[] = [];

canvas.addEventListener("pointerdown", (ev) => {
  drawing = true;
  samples = [canvasPoint(ev)];
});

canvas.addEventListener("pointermove", (ev) => {
  if (!drawing) return;
  samples.push(canvasPoint(ev));
  redraw(samples);
});

canvas.addEventListener("pointerup", () => {
  if (!drawing) return;
  drawing = false;
  const stroke = captureStroke(samples, canvas.width, canvas.height);
  samples = [];
  if (!stroke) return; // zero-length gesture: nothing emitted
  void session.addStroke(stroke);
});

function canvasPoint(ev: PointerEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return [
    ((ev.clientX - rect.left) / rect.width) * canvas.width,
    ((ev.clientY - rect.top) / rect.height) * canvas.height,
  ];
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

function redraw(active: Point[] = []): void {
  ctx.fillStyle = "#fff";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#222";
  ctx.lineWidth = 3;
  for (const stroke of session.strokes) {
    drawPolyline(stroke.map(([x, y]) => [x * (canvas.width - 1), y * (canvas.height - 1)]));
  }
  if (active.length > 1) drawPolyline(active);
  if (session.overlayEnabled && session.lastResponse) {
    ctx.fillStyle = "rgba(220, 60, 60, 0.55)";
    for (const [px, py] of session.lastResponse.glimpse_trace) {
      const cx = (px / (RASTER - 1)) * canvas.width;
      const cy = (py / (RASTER - 1)) * canvas.height;
      ctx.beginPath();
      ctx.arc(cx, cy, 7, 0, Math.PI * 2);
      ctx.fill();
    }
  }
}

function drawPolyline(pts: Point[]): void {
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
  ctx.stroke();
}

function renderFeedback(response: StrokeResponse, strokeIndex: number): void {
  gallery.replaceChildren(
    ...response.rank_list.map((entry, rank) => {
      const cell = document.createElement("figure");
      cell.className = "thumb";
      const img = document.createElement("img");
      img.src = api.imageUrl(entry.item_id);
      img.alt = entry.item_id;
      const cap = document.createElement("figcaption");
      cap.textContent = `#${rank + 1} ${entry.item_id} (${entry.distance.toFixed(3)})`;
      cell.append(img, cap);
      return cell;
    }),
  );
  statusEl.textContent = response.percentile === null
    ? `stroke ${strokeIndex + 1} submitted`
    : `stroke ${strokeIndex + 1}: percentile ${response.percentile.toFixed(3)}`;
  renderSparkline();
  redraw();
}

function renderSparkline(): void {
  const hist = session.percentileHistory;
  sparkCtx.fillStyle = "#f4f4f4";
  sparkCtx.fillRect(0, 0, spark.width, spark.height);
  sparkCtx.strokeStyle = "#2266cc";
  sparkCtx.beginPath();
  hist.forEach((p, i) => {
    const x = hist.length === 1 ? 0 : (i / (hist.length - 1)) * (spark.width - 4) + 2;
    const y = spark.height - 2 - (p ?? 0) * (spark.height - 4);
    if (i === 0) sparkCtx.moveTo(x, y);
    else sparkCtx.lineTo(x, y);
  });
  sparkCtx.stroke();
}

// ---------------------------------------------------------------------------
// controls
// ---------------------------------------------------------------------------

overlayBtn.addEventListener("click", () => {
  session.toggleOverlay();
  redraw();
});

undoBtn.addEventListener("click", () => {
  void session.undo().then(() => {
    renderSparkline();
    redraw();
    if (session.lastResponse) {
      renderFeedback(session.lastResponse, session.strokes.length - 1);
    } else {
      gallery.replaceChildren();
      statusEl.textContent = "empty canvas";
    }
  });
});

clearBtn.addEventListener("click", () => {
  session = newSession(targetSelect.value || undefined);
  gallery.replaceChildren();
  renderSparkline();
  redraw();
  statusEl.textContent = "new session";
});

targetSelect.addEventListener("change", () => {
  session = newSession(targetSelect.value || undefined);
  gallery.replaceChildren();
  redraw();
  statusEl.textContent = targetSelect.value
    ? `target ${targetSelect.value}; percentile feedback on`
    : "free drawing";
});

void api.galleryIds().then((ids) => {
  targetSelect.replaceChildren(
    new Option("free drawing (no target)", ""),
    ...ids.map((id) => new Option(id, id)),
  );
}).catch(() => toast("gallery list unavailable"));

redraw();
