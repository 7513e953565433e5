import init, { normCurve, decayHeatmap, accuracyOverTime } from "./pkg/decay_cluster_web.js";

const COLORS = ["#888", "#1f77b4", "#d62728", "#2ca02c"];
const status = document.getElementById("status");

function params() {
  const num = (id) => Number(document.getElementById(id).value);
  return [num("n"), num("alpha"), num("tau"), num("eps1"), num("eps2"), num("steps"), num("seed")];
}

// Lets the status line repaint before a blocking computation.
function run(label, f) {
  status.textContent = label + "...";
  setTimeout(() => {
    const t0 = performance.now();
    try {
      f();
      status.textContent = `${label}: ${((performance.now() - t0) / 1000).toFixed(1)} s`;
    } catch (e) {
      status.textContent = `${label} failed: ${e.message ?? e}`;
    }
  }, 20);
}

function axes(ctx, box, xr, yr, xlabel, ylabel) {
  const { x0, y0, w, h } = box;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.strokeStyle = "#444";
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.strokeRect(x0, y0, w, h);
  for (let i = 0; i <= 4; i++) {
    const xv = xr[0] + (i / 4) * (xr[1] - xr[0]);
    const yv = yr[0] + (i / 4) * (yr[1] - yr[0]);
    ctx.fillText(xv.toFixed(2), x0 + (i / 4) * w - 10, y0 + h + 16);
    ctx.fillText(yv.toFixed(2), x0 - 40, y0 + h - (i / 4) * h + 4);
  }
  ctx.fillText(xlabel, x0 + w / 2 - 10, y0 + h + 34);
  ctx.save();
  ctx.translate(14, y0 + h / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylabel, -20, 0);
  ctx.restore();
  const sx = (x) => x0 + ((x - xr[0]) / (xr[1] - xr[0])) * w;
  const sy = (y) => y0 + h - ((y - yr[0]) / (yr[1] - yr[0])) * h;
  return [sx, sy];
}

function line(ctx, xs, ys, sx, sy, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.lineWidth = 1;
}

function drawNorm() {
  const c = JSON.parse(normCurve(...params(), 40));
  const ctx = document.getElementById("norm").getContext("2d");
  const lo = Math.min(...c.norms), hi = Math.max(...c.norms);
  const pad = (hi - lo) * 0.05 || 1;
  const [sx, sy] = axes(ctx, { x0: 60, y0: 10, w: 820, h: 260 }, [0, 1], [lo - pad, hi + pad], "λ", "norm");
  line(ctx, c.lambdas, c.norms, sx, sy, COLORS[1]);
  ctx.setLineDash([4, 4]);
  for (const [v, col] of [[c.argmin, "#000"], ...c.optimal.map((v, i) => [v, COLORS[2 + i]])]) {
    ctx.strokeStyle = col;
    ctx.beginPath();
    ctx.moveTo(sx(v), sy(lo - pad));
    ctx.lineTo(sx(v), sy(hi + pad));
    ctx.stroke();
  }
  ctx.setLineDash([]);
  ctx.fillStyle = "#000";
  ctx.fillText(`argmin λ = ${c.argmin.toFixed(3)}; optimal rates ${c.optimal.map((v) => v.toFixed(3)).join(", ")}`, 70, 28);
}

function shade(v, lo, hi) {
  const t = hi > lo ? (v - lo) / (hi - lo) : 1;
  const r = Math.round(255 * (1 - t) + 30 * t);
  const g = Math.round(245 * (1 - t) + 60 * t);
  const b = Math.round(235 * (1 - t) + 150 * t);
  return `rgb(${r},${g},${b})`;
}

function drawHeatmap() {
  const step = Number(document.getElementById("grid-step").value);
  const values = [];
  for (let v = step; v < 1 - 1e-9; v += step) values.push(Math.round(v * 10) / 10);
  const h = JSON.parse(decayHeatmap(...params(), new Float64Array(values)));
  const ctx = document.getElementById("heatmap").getContext("2d");
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  const m = values.length, size = 400 / m, x0 = 60, y0 = 10;
  const all = h.accuracy.flat();
  const lo = Math.min(...all), hi = Math.max(...all);
  ctx.font = "11px system-ui";
  h.accuracy.forEach((row, i) =>
    row.forEach((a, j) => {
      // rows are Λ11 (vertical, increasing upward), columns Λ22
      const x = x0 + j * size, y = y0 + (m - 1 - i) * size;
      ctx.fillStyle = shade(a, lo, hi);
      ctx.fillRect(x, y, size, size);
      ctx.fillStyle = a > (lo + hi) / 2 ? "#fff" : "#222";
      ctx.fillText(a.toFixed(2), x + size / 2 - 12, y + size / 2 + 4);
    })
  );
  ctx.fillStyle = "#444";
  values.forEach((v, k) => {
    ctx.fillText(v.toFixed(1), x0 + k * size + size / 2 - 8, y0 + m * size + 16);
    ctx.fillText(v.toFixed(1), x0 - 26, y0 + (m - 1 - k) * size + size / 2 + 4);
  });
  ctx.fillText("Λ22", x0 + 200, y0 + m * size + 36);
  ctx.fillText("Λ11", 4, y0 + 200);
  // centre of the cell holding (Λ11, Λ22); off-grid values interpolate
  const centre = (l11, l22) => [x0 + (l22 / step - 0.5) * size, y0 + (m + 0.5 - l11 / step) * size];
  const [bx, by] = centre(h.best[0], h.best[1]);
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.arc(bx, by, size / 3, 0, 2 * Math.PI);
  ctx.stroke();
  const [ox, oy] = centre(h.optimal[0], h.optimal[1]);
  ctx.strokeStyle = "#000";
  ctx.beginPath();
  ctx.moveTo(ox - 8, oy - 8);
  ctx.lineTo(ox + 8, oy + 8);
  ctx.moveTo(ox + 8, oy - 8);
  ctx.lineTo(ox - 8, oy + 8);
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#222";
  ctx.fillText(`best (${h.best[0]}, ${h.best[1]}), accuracy ${hi.toFixed(3)}`, x0 + m * size + 10, y0 + 14);
}

function drawTime() {
  const series = JSON.parse(accuracyOverTime(...params()));
  const ctx = document.getElementById("time").getContext("2d");
  const steps = series[0].accuracy.length;
  const lo = Math.min(...series.flatMap((s) => s.accuracy));
  const [sx, sy] = axes(ctx, { x0: 60, y0: 10, w: 820, h: 260 }, [1, Math.max(steps, 2)], [Math.min(lo, 0.9) - 0.02, 1], "step", "accuracy");
  const xs = series[0].accuracy.map((_, i) => i + 1);
  series.forEach((s, i) => line(ctx, xs, s.accuracy, sx, sy, COLORS[i]));
  document.getElementById("legend").innerHTML = series
    .map((s, i) => `<span><i style="background:${COLORS[i]}"></i>${s.method} (mean ${s.mean.toFixed(3)})</span>`)
    .join("");
}

await init();
document.getElementById("run-norm").onclick = () => run("λ sweep", drawNorm);
document.getElementById("run-heatmap").onclick = () => run("decay grid", drawHeatmap);
document.getElementById("run-time").onclick = () => run("clustering", drawTime);
run("clustering", drawTime);
