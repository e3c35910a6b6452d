/** Browser bootstrap: wires the API client, session store, canvas overlay,
 * gestures and keyboard bindings into the single-page review app. */

import { ApiClient } from "./api.js";
import { BoxGesture, hitTest } from "./editor.js";
import { actionForKey } from "./keys.js";
import { groupIntoLines } from "./lines.js";
import { renderOverlay } from "./overlay.js";
import { SessionStore } from "./state.js";
import { ViewTransform } from "./transform.js";
import type { CatalogEntry, Hotspot, ImageInfo, Point } from "./types.js";

const api = new ApiClient("");

interface AppState {
  store: SessionStore | null;
  imageId: string | null;
  image: HTMLImageElement | null;
  imageInfo: ImageInfo | null;
  imageError: string | null;
  transform: ViewTransform;
  gesture: BoxGesture | null;
  catalog: Map<number, string>;
}

const app: AppState = {
  store: null,
  imageId: null,
  image: null,
  imageInfo: null,
  imageError: null,
  transform: new ViewTransform(),
  gesture: null,
  catalog: new Map(),
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("canvas");
const ctx = canvas.getContext("2d")!;

function toImagePoint(event: MouseEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return app.transform.toImage({
    x: event.clientX - rect.left,
    y: event.clientY - rect.top,
  });
}

function currentHotspots(): Hotspot[] {
  if (!app.store || !app.imageId) return [];
  return app.store.hotspotsForImage(app.imageId);
}

function redraw(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (app.image && !app.imageError) {
    ctx.save();
    ctx.setTransform(
      app.transform.scale, 0, 0, app.transform.scale,
      app.transform.tx, app.transform.ty,
    );
    ctx.drawImage(app.image, 0, 0);
    ctx.restore();
  }
  const hotspots = currentHotspots();
  renderOverlay(ctx, {
    hotspots,
    lines: groupIntoLines(hotspots),
    transform: app.transform,
    selectedId: app.store?.selectedId ?? null,
    imageError: app.imageError,
    viewWidth: 0, // overlay clear is a no-op: the image pass cleared already
    viewHeight: 0,
  });
  renderSidebar();
}

function renderSidebar(): void {
  const banner = el<HTMLDivElement>("banner");
  if (app.store?.conflict) {
    banner.textContent = "Edit conflict: state was refreshed from the server, replay your change.";
    banner.style.display = "block";
  } else {
    banner.style.display = "none";
  }
  el<HTMLSpanElement>("pending").textContent = String(app.store?.pendingCount ?? 0);

  const panel = el<HTMLDivElement>("suggestions");
  panel.innerHTML = "";
  const selected = app.store?.selectedId
    ? app.store.hotspots.get(app.store.selectedId)
    : null;
  if (!selected) {
    panel.textContent = "Select a hotspot to see suggestions.";
    return;
  }
  const header = document.createElement("div");
  header.textContent =
    `${selected.hotspot_id} [${selected.status}]` +
    (selected.chosen_class !== null
      ? ` chosen: ${app.catalog.get(selected.chosen_class) ?? selected.chosen_class}`
      : "");
  panel.appendChild(header);
  selected.suggestions.slice(0, 5).forEach(([classId, score], i) => {
    const row = document.createElement("div");
    row.className = "suggestion";
    row.textContent = `${i + 1}. ${app.catalog.get(classId) ?? classId}  (${score.toFixed(3)})`;
    row.onclick = () =>
      app.store?.submit("choose_class", selected.hotspot_id, { class_id: classId });
    panel.appendChild(row);
  });
}

async function selectImage(info: ImageInfo): Promise<void> {
  app.imageId = info.image_id;
  app.imageInfo = info;
  app.imageError = null;
  app.image = new Image();
  app.image.onload = () => {
    app.transform = ViewTransform.fit(info.width, info.height, canvas.width, canvas.height);
    redraw();
  };
  app.image.onerror = () => {
    app.imageError = info.file_name;
    redraw();
  };
  app.image.src = api.imageUrl(info.image_id);
  redraw();
}

function wireCanvas(): void {
  canvas.onmousedown = (event) => {
    if (!app.store || !app.imageInfo) return;
    const p = toImagePoint(event);
    for (const spot of currentHotspots()) {
      const mode = hitTest(spot, p, 6 / app.transform.scale);
      if (mode) {
        app.store.select(spot.hotspot_id);
        app.gesture = new BoxGesture(
          spot.hotspot_id, mode, p, spot.bbox,
          app.imageInfo.width, app.imageInfo.height,
        );
        redraw();
        return;
      }
    }
    app.store.select(null);
    redraw();
  };
  canvas.onmousemove = (event) => {
    if (!app.gesture || !app.store) return;
    const live = app.gesture.update(toImagePoint(event));
    const spot = app.store.hotspots.get(app.gesture.target);
    if (spot) spot.bbox = live; // live preview; the edit posts on mouseup
    redraw();
  };
  canvas.onmouseup = () => {
    if (!app.gesture || !app.store) return;
    const result = app.gesture.finish();
    app.gesture = null;
    if (result) {
      app.store.submit(result.kind, result.target, { bbox: result.bbox });
    }
    redraw();
  };
  canvas.onwheel = (event) => {
    event.preventDefault();
    const rect = canvas.getBoundingClientRect();
    const at = { x: event.clientX - rect.left, y: event.clientY - rect.top };
    app.transform = app.transform.zoomAt(at, event.deltaY < 0 ? 1.2 : 1 / 1.2);
    redraw();
  };
}

function wireKeyboard(): void {
  window.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    if (!app.store) return;
    const selected = app.store.selectedId
      ? (app.store.hotspots.get(app.store.selectedId) ?? null)
      : null;
    const action = actionForKey(event.key, selected);
    if (action) {
      event.preventDefault();
      app.store.submit(action.kind, action.target, action.payload);
    }
  });
}

async function boot(): Promise<void> {
  const catalog = (await api.catalog()) as CatalogEntry[];
  app.catalog = new Map(catalog.map((c) => [c.class_id, c.name]));

  app.store = await SessionStore.open(api, localStorage.getItem("session_id") ?? undefined);
  localStorage.setItem("session_id", app.store.sessionId);
  app.store.onChange(redraw);

  const tabletList = el<HTMLUListElement>("tablets");
  const tablets = await api.tablets();
  for (const tablet of tablets) {
    const item = document.createElement("li");
    item.textContent = `${tablet.tablet_id} (${tablet.image_count})`;
    item.onclick = async () => {
      const images = await api.tabletImages(tablet.tablet_id);
      if (images.length > 0) await selectImage(images[0]);
    };
    tabletList.appendChild(item);
  }
  el<HTMLAnchorElement>("export").href =
    `/api/sessions/${encodeURIComponent(app.store.sessionId)}/export`;

  wireCanvas();
  wireKeyboard();
  redraw();
}

boot().catch((error) => {
  el<HTMLDivElement>("banner").textContent = `failed to start: ${error}`;
  el<HTMLDivElement>("banner").style.display = "block";
});
