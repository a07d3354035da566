// Built with: wasm-bindgen --target web --out-dir www/pkg target/wasm32-unknown-unknown/release/fetidp_web.wasm
import init, { coefficient_raster, solve, spectrum } from "./pkg/fetidp_web.js";

const $ = (id) => document.getElementById(id);
const RES = 160;

function params() {
  return [$("preset").value, +$("nx").value, +$("n").value, +$("alpha").value];
}

function status(msg, err = false) {
  $("status").textContent = msg;
  $("status").className = err ? "err" : "";
}

// blue to yellow
function colour(t) {
  t = Math.min(1, Math.max(0, t));
  return [Math.round(30 + 225 * t), Math.round(60 + 170 * t), Math.round(160 - 120 * t)];
}

function paint(canvas, values, res, nx) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(res, res);
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const span = hi > lo ? hi - lo : 1;
  values.forEach((v, k) => {
    const [r, g, b] = colour((v - lo) / span);
    img.data.set([r, g, b, 255], 4 * k);
  });
  const tmp = new OffscreenCanvas(res, res);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "rgba(0,0,0,0.6)";
  for (let k = 1; k < nx; k++) {
    const p = (k * canvas.width) / nx;
    ctx.beginPath(); ctx.moveTo(p, 0); ctx.lineTo(p, canvas.height); ctx.stroke();
    ctx.beginPath(); ctx.moveTo(0, p); ctx.lineTo(canvas.width, p); ctx.stroke();
  }
  return [lo, hi];
}

function plotLog(canvas, ys, label) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const logs = ys.map((y) => Math.log10(Math.max(y, 1e-300)));
  const lo = Math.min(...logs), hi = Math.max(...logs);
  const span = hi > lo ? hi - lo : 1;
  const pad = 24;
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, 8, w - pad - 8, h - pad - 8);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toFixed(1), 2, 16);
  ctx.fillText(lo.toFixed(1), 2, h - pad);
  ctx.fillText(label, pad + 4, h - 6);
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  logs.forEach((v, k) => {
    const x = pad + ((w - pad - 8) * k) / Math.max(1, logs.length - 1);
    const y = 8 + (h - pad - 8) * (1 - (v - lo) / span);
    k ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
  });
  ctx.stroke();
}

function showCoefficient() {
  const [preset, nx, n, alpha] = params();
  const r = coefficient_raster(preset, nx, n, alpha, RES);
  const [lo, hi] = paint($("coef"), r, RES, nx);
  return `α in [1e${lo.toFixed(0)}, 1e${hi.toFixed(0)}]`;
}

function run(label, fn) {
  status(label + "…");
  // let the status line paint before the blocking call
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const msg = fn();
      status(`${msg} (${((performance.now() - t0) / 1000).toFixed(2)} s)`);
    } catch (e) {
      status(String(e.message ?? e), true);
    }
  }, 20);
}

$("show").onclick = () => run("sampling", showCoefficient);

$("solve").onclick = () => run("solving", () => {
  showCoefficient();
  const [preset, nx, n, alpha] = params();
  const s = JSON.parse(solve(preset, nx, n, alpha, RES));
  paint($("sol"), s.u, s.res, nx);
  $("plotcap").textContent = "PCG relative residual (log₁₀) per iteration";
  plotLog($("plot"), s.residuals, "iteration");
  $("info").textContent =
    `H/h = ${s.h_ratio}, multipliers = ${s.num_multipliers}, primal unknowns = ${s.num_primal}\n` +
    `iterations = ${s.iterations}${s.converged ? "" : " (not converged)"}, ` +
    `Lanczos condition estimate = ${s.cond_estimate.toFixed(3)}`;
  return `solved in ${s.iterations} iterations`;
});

$("spectrum").onclick = () => run("computing dense spectrum", () => {
  const [preset, nx, n, alpha] = params();
  const ev = Array.from(spectrum(preset, nx, n, alpha));
  $("plotcap").textContent = "eigenvalues of M⁻¹F (log₁₀), ascending";
  plotLog($("plot"), ev, "index");
  const k = ev[ev.length - 1] / ev[0];
  $("info").textContent = `${ev.length} eigenvalues, λmin = ${ev[0].toFixed(6)}, λmax = ${ev[ev.length - 1].toFixed(4)}, κ = ${k.toFixed(4)}`;
  return "spectrum done";
});

init().then(() => {
  status("ready");
  run("sampling", showCoefficient);
});
