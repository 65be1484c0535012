import init, { density, shape_moments, Tracking } from "./pkg/sdsvar_wasm.js";

const $ = (id) => document.getElementById(id);
let tracking = null;

// Draw series into a rectangle of the canvas. Each series is
// { ys, color, lo?, hi? } where lo/hi give a shaded band.
function plot(canvas, series, { x0 = 0, box } = {}) {
  const ctx = canvas.getContext("2d");
  const [bx, by, bw, bh] = box ?? [40, 10, canvas.width - 50, canvas.height - 30];
  let ymin = Infinity, ymax = -Infinity, len = 0;
  for (const s of series) {
    for (const arr of [s.ys, s.lo, s.hi]) {
      if (!arr) continue;
      len = Math.max(len, arr.length);
      for (const v of arr) if (Number.isFinite(v)) { ymin = Math.min(ymin, v); ymax = Math.max(ymax, v); }
    }
  }
  if (!(ymax > ymin)) { ymin -= 1; ymax += 1; }
  const px = (k) => bx + (bw * k) / Math.max(len - 1, 1);
  const py = (v) => by + bh - (bh * (v - ymin)) / (ymax - ymin);
  ctx.strokeStyle = "#ddd";
  ctx.strokeRect(bx, by, bw, bh);
  if (ymin < 0 && ymax > 0) {
    ctx.beginPath(); ctx.moveTo(bx, py(0)); ctx.lineTo(bx + bw, py(0)); ctx.stroke();
  }
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(ymax.toPrecision(3), bx - 38, by + 10);
  ctx.fillText(ymin.toPrecision(3), bx - 38, by + bh);
  ctx.fillText(String(x0), bx, by + bh + 14);
  ctx.fillText(String(x0 + len - 1), bx + bw - 24, by + bh + 14);
  for (const s of series) {
    if (s.lo && s.hi) {
      ctx.fillStyle = s.band;
      ctx.beginPath();
      s.hi.forEach((v, k) => (k ? ctx.lineTo(px(k), py(v)) : ctx.moveTo(px(k), py(v))));
      for (let k = s.lo.length - 1; k >= 0; k--) ctx.lineTo(px(k), py(s.lo[k]));
      ctx.fill();
    }
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    s.ys.forEach((v, k) => (k ? ctx.lineTo(px(k), py(v)) : ctx.moveTo(px(k), py(v))));
    ctx.stroke();
  }
}

function clear(canvas) {
  canvas.getContext("2d").clearRect(0, 0, canvas.width, canvas.height);
}

function status(msg, bad = false) {
  $("status").textContent = msg;
  $("status").className = bad ? "err" : "note";
}

function drawDensity() {
  const d = +$("delta").value, nu = +$("nu").value;
  $("delta-v").textContent = d.toFixed(2);
  $("nu-v").textContent = nu.toFixed(1);
  try {
    const ys = density(d, nu, -6, 6, 601);
    const ref = density(0, 400, -6, 6, 601);
    clear($("density"));
    plot($("density"), [{ ys: Array.from(ref), color: "#bbb", width: 1 }, { ys: Array.from(ys), color: "#2e7d32" }]);
    const [sk, ku] = shape_moments(d, nu);
    const fmt = (v) => (Number.isFinite(v) ? v.toFixed(3) : "∞");
    $("moments").textContent = `skewness ${fmt(sk)}, kurtosis ${fmt(ku)} (grey: near-Gaussian)`;
    status("ready");
  } catch (e) {
    status(String(e.message ?? e), true);
  }
}

function drawPaths() {
  if (!tracking) return;
  const k = +$("component").value;
  clear($("paths"));
  plot($("paths"), [
    { ys: Array.from(tracking.truth(k)), color: "#888" },
    { ys: Array.from(tracking.filtered(k)), color: "#1565c0" },
  ], { x0: tracking.start() });
}

function runTracking() {
  status("filtering…");
  setTimeout(() => {
    try {
      tracking?.free();
      tracking = new Tracking($("process").value, +$("tlen").value, +$("seed").value, +$("ascale").value);
      const sel = $("component"), keep = sel.value;
      sel.replaceChildren(...tracking.labels().map((l, i) => new Option(l, i)));
      if (keep && keep < sel.options.length) sel.value = keep;
      $("ll").textContent = `log-likelihood ${tracking.loglik().toFixed(2)}`;
      drawPaths();
      status("ready");
    } catch (e) {
      tracking = null;
      status(String(e.message ?? e), true);
    }
  }, 0);
}

function runIrf() {
  if (!tracking) runTracking();
  status("simulating responses…");
  setTimeout(() => {
    try {
      const h = +$("horizon").value, t0 = performance.now();
      const out = tracking.responses(+$("shock").value, h, +$("draws").value, +$("seed").value);
      const n = 3, m = h + 1, block = n * m;
      const canvas = $("responses");
      clear(canvas);
      const w = (canvas.width - 30) / n;
      for (let i = 0; i < n; i++) {
        const at = (b) => Array.from(out.slice(b * block + i * m, b * block + (i + 1) * m));
        const mean = at(0), half = at(1), fixed = at(2);
        plot(canvas, [
          { ys: fixed, color: "#888", width: 1 },
          { ys: mean, color: "#c62828", lo: mean.map((v, k) => v - 1.96 * half[k]), hi: mean.map((v, k) => v + 1.96 * half[k]), band: "rgba(198,40,40,.15)" },
        ], { box: [40 + i * w, 10, w - 50, canvas.height - 30] });
        canvas.getContext("2d").fillText(`y${i + 1}`, 44 + i * w, 22);
      }
      $("irf-time").textContent = `${(performance.now() - t0).toFixed(0)} ms`;
      status("ready");
    } catch (e) {
      status(String(e.message ?? e), true);
    }
  }, 0);
}

await init();
for (const id of ["delta", "nu"]) $(id).addEventListener("input", drawDensity);
$("run").addEventListener("click", runTracking);
$("component").addEventListener("change", drawPaths);
$("irf").addEventListener("click", runIrf);
drawDensity();
runTracking();
