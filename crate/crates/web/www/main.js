import init, { spectra, kernels, paths } from "./pkg/tvls_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const num = (id) => Number(document.getElementById(id).value);

function model() {
  return { a0: num("a0"), a1: num("a1"), t: num("t"), n: Math.max(1, Math.round(num("n"))) };
}

// Draws each series as a polyline over shared axes.
function plot(canvas, x, series) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, width, height);
  const all = series.flat().filter(Number.isFinite);
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi === lo) { hi += 1; lo -= 1; }
  const x0 = x[0], x1 = x[x.length - 1];
  const px = (v) => pad + ((v - x0) / (x1 - x0 || 1)) * (width - 2 * pad);
  const py = (v) => height - pad - ((v - lo) / (hi - lo)) * (height - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, width - 2 * pad, height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toPrecision(3), 2, pad + 4);
  ctx.fillText(lo.toPrecision(3), 2, height - pad);
  ctx.fillText(x0.toPrecision(3), pad, height - pad + 14);
  ctx.fillText(x1.toPrecision(3), width - pad - 24, height - pad + 14);

  series.forEach((ys, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    ys.forEach((y, i) => (i ? ctx.lineTo(px(x[i]), py(y)) : ctx.moveTo(px(x[i]), py(y))));
    ctx.stroke();
  });
}

// Runs `work` after the status line has been painted.
function run(statusId, work) {
  const status = document.getElementById(statusId);
  status.className = "status";
  status.textContent = "computing…";
  setTimeout(() => {
    const start = performance.now();
    try {
      const note = work();
      status.textContent = `${((performance.now() - start) / 1000).toFixed(2)} s${note ? " · " + note : ""}`;
    } catch (err) {
      status.className = "status error";
      status.textContent = String(err);
    }
  }, 20);
}

function showSpectra() {
  run("spectra-status", () => {
    const m = model();
    const r = JSON.parse(spectra(m.a0, m.a1, m.t, m.n, num("lmax"), num("dl")));
    plot(document.getElementById("spectra-plot"), r.lambda, [r.f, r.f_n]);
    const gap = Math.max(...r.f.map((v, i) => Math.abs(v - r.f_n[i])));
    return `sup |f − f_N| = ${gap.toExponential(3)}` + (r.warnings.length ? ` · ${r.warnings.join("; ")}` : "");
  });
}

function showKernels() {
  run("kernels-status", () => {
    const m = model();
    const r = JSON.parse(kernels(m.a0, m.a1, m.t, m.n));
    plot(document.getElementById("kernels-plot"), r.u, [r.g, r.g_n]);
    const table = document.getElementById("kernels-table");
    table.innerHTML = "<tr><th>N</th><th>‖g_N − g‖</th></tr>" +
      r.distances.map(([n, d]) => `<tr><td>${n}</td><td>${d.toExponential(4)}</td></tr>`).join("");
    return r.verified ? "convergence conditions verified" : "convergence conditions not verified on this window";
  });
}

function showPaths() {
  run("paths-status", () => {
    const m = model();
    const r = JSON.parse(paths(m.a0, m.a1, m.n, num("t0"), num("t1"), num("dt"), Math.round(num("count")), BigInt(Math.round(num("seed")))));
    plot(document.getElementById("paths-plot"), r.t, r.y);
    return `burn-in ${r.burn_in.toFixed(2)} (fast time)`;
  });
}

await init();
document.getElementById("run-spectra").addEventListener("click", showSpectra);
document.getElementById("run-kernels").addEventListener("click", showKernels);
document.getElementById("run-paths").addEventListener("click", showPaths);
showKernels();
