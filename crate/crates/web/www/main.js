import init, { explore_iou, pattern_names, pattern_rgba, edge_rgba, fuse_label_text } from "./pkg/obbfuse_web.js";

const $ = (id) => document.getElementById(id);

function slider(parent, name, min, max, value, step, onInput) {
  const label = document.createElement("label");
  const input = Object.assign(document.createElement("input"), { type: "range", min, max, value, step });
  const out = document.createElement("span");
  label.append(name, input, out);
  parent.append(label);
  const show = () => { out.textContent = input.value; onInput(); };
  input.addEventListener("input", show);
  out.textContent = value;
  return input;
}

function polygon(ctx, flat, offset, n, stroke, fill) {
  ctx.beginPath();
  for (let k = 0; k < n; k++) {
    const x = flat[offset + 2 * k], y = flat[offset + 2 * k + 1];
    k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.closePath();
  if (fill) { ctx.fillStyle = fill; ctx.fill(); }
  if (stroke) { ctx.strokeStyle = stroke; ctx.stroke(); }
}

// Rotated IoU

const boxes = { a: [150, 160, 160, 80, 20], b: [230, 170, 120, 110, -30] };
const inputs = { a: [], b: [] };

function drawIou() {
  const [a, b] = ["a", "b"].map((k) => inputs[k].map((i) => Number(i.value)));
  let view;
  try {
    view = explore_iou(...a, ...b);
  } catch (e) {
    $("iou-out").innerHTML = `<span class="err">${e.message ?? e}</span>`;
    return;
  }
  const ctx = $("iou-canvas").getContext("2d");
  ctx.clearRect(0, 0, 420, 320);
  ctx.lineWidth = 2;
  const poly = view.polygon();
  if (poly.length) polygon(ctx, poly, 0, poly.length / 2, "#222", "rgba(120, 60, 160, 0.35)");
  polygon(ctx, view.corners_a(), 0, 4, "#d33");
  polygon(ctx, view.corners_b(), 0, 4, "#36c");
  $("iou-out").textContent =
    `IoU ${view.iou.toFixed(6)}  |  intersection ${view.intersection.toFixed(2)}  |  ` +
    `areas ${view.area_a.toFixed(1)} / ${view.area_b.toFixed(1)}`;
  view.free();
}

function buildIou() {
  const names = ["cx", "cy", "w", "h", "deg"];
  const ranges = [[0, 420], [0, 320], [4, 300], [4, 300], [-90, 90]];
  for (const k of ["a", "b"]) {
    names.forEach((n, i) => {
      inputs[k].push(slider($(`box-${k}`), n, ranges[i][0], ranges[i][1], boxes[k][i], 1, drawIou));
    });
  }
  drawIou();
}

// Edge map

function drawEdges() {
  const name = $("pattern").value;
  const angle = Number($("pattern-angle").value);
  const eps = Math.pow(10, Number($("eps").value));
  $("pattern-angle-v").textContent = angle;
  $("eps-v").textContent = eps.toExponential(0);
  const size = 192;
  for (const [id, pixels] of [
    ["pattern-canvas", pattern_rgba(name, size, size, angle)],
    ["edge-canvas", edge_rgba(name, size, size, angle, eps)],
  ]) {
    const img = new ImageData(new Uint8ClampedArray(pixels), size, size);
    $(id).getContext("2d").putImageData(img, 0, 0);
  }
}

function buildEdges() {
  for (const n of pattern_names().split(",")) {
    $("pattern").append(new Option(n, n));
  }
  for (const id of ["pattern", "pattern-angle", "eps"]) {
    $(id).addEventListener("input", drawEdges);
  }
  drawEdges();
}

// Label fusion

function drawFusion() {
  const tau = Number($("tau").value);
  $("tau-v").textContent = tau.toFixed(2);
  let view;
  try {
    view = fuse_label_text($("rgb-text").value, $("ir-text").value, tau);
  } catch (e) {
    $("fuse-out").innerHTML = `<span class="err">${e.message ?? e}</span>`;
    $("fuse-text").textContent = "";
    return;
  }
  const ctx = $("fuse-canvas").getContext("2d");
  ctx.clearRect(0, 0, 300, 200);
  ctx.setLineDash([4, 3]);
  ctx.lineWidth = 1;
  const vis = view.visible(), ir = view.infrared(), fused = view.fused();
  for (let k = 0; k < vis.length; k += 8) polygon(ctx, vis, k, 4, "#d33");
  for (let k = 0; k < ir.length; k += 8) polygon(ctx, ir, k, 4, "#36c");
  ctx.setLineDash([]);
  ctx.lineWidth = 2;
  ctx.font = "11px sans-serif";
  const cats = view.fused_categories.split("\n");
  for (let k = 0; k < fused.length; k += 8) {
    polygon(ctx, fused, k, 4, "#2a2");
    ctx.fillStyle = "#2a2";
    ctx.fillText(cats[k / 8], fused[k], fused[k + 1] - 3);
  }
  $("fuse-out").textContent =
    `visible ${view.m}, infrared ${view.n}, matched ${view.matched}, fused ${fused.length / 8}`;
  $("fuse-text").textContent = view.fused_text;
  view.free();
}

function buildFusion() {
  for (const id of ["rgb-text", "ir-text", "tau"]) {
    $(id).addEventListener("input", drawFusion);
  }
  drawFusion();
}

await init();
buildIou();
buildEdges();
buildFusion();
