import init, { wakeFrames, cavityVorticity, gaussianMutualInformation } from "./pkg/dyncgan_web.js";

const $ = (id) => document.getElementById(id);

// Diverging blue-white-red map of v in [-m, m].
function rgb(v, m) {
  const s = Math.max(-1, Math.min(1, m > 0 ? v / m : 0));
  const a = Math.round(255 * (1 - Math.abs(s)));
  return s >= 0 ? [255, a, a] : [a, a, 255];
}

// Draws frame `t` of `frames` (ny x nx, row 0 at the bottom), centred on `mid`.
function draw(canvas, frames, t, ny, nx, mid, range) {
  canvas.width = nx;
  canvas.height = ny;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(nx, ny);
  const base = t * ny * nx;
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      const [r, g, b] = rgb(frames[base + j * nx + i] - mid, range);
      const k = 4 * ((ny - 1 - j) * nx + i);
      img.data[k] = r;
      img.data[k + 1] = g;
      img.data[k + 2] = b;
      img.data[k + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

function extent(frames) {
  let lo = Infinity, hi = -Infinity;
  for (const v of frames) { if (v < lo) lo = v; if (v > hi) hi = v; }
  return [lo, hi];
}

function report(el, f) {
  try {
    el.classList.remove("err");
    f();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e.message ?? e);
  }
}

// ---- wake
const WAKE = { ny: 48, nx: 96, steps: 80, dt: 0.25 };
let wake = null;
let wakeT = 0;

function computeWake() {
  const re = Number($("wake-re").value);
  $("wake-re-val").textContent = re;
  report($("wake-out"), () => {
    const transverse = $("wake-field").value === "v";
    const frames = wakeFrames(re, WAKE.steps, WAKE.dt, WAKE.ny, WAKE.nx, transverse, 1);
    const [lo, hi] = extent(frames);
    // v is centred on zero, u on the free stream
    const mid = transverse ? 0 : 1;
    wake = { frames, mid, range: Math.max(Math.abs(lo - mid), Math.abs(hi - mid)) };
    const st = 0.198 * (1 - 19.7 / re);
    $("wake-out").textContent = `St = ${st.toFixed(4)}, range [${lo.toFixed(3)}, ${hi.toFixed(3)}]`;
  });
}

function animate() {
  if (wake) {
    draw($("wake-canvas"), wake.frames, wakeT, WAKE.ny, WAKE.nx, wake.mid, wake.range);
    if ($("wake-play").checked) wakeT = (wakeT + 1) % WAKE.steps;
  }
  setTimeout(() => requestAnimationFrame(animate), 60);
}

// ---- cavity
let cav = null;

function runCavity() {
  const n = Number($("cav-n").value);
  const steps = Number($("cav-steps").value);
  const dt = Number($("cav-dt").value);
  const re = Number($("cav-re").value);
  $("cav-out").textContent = "running...";
  // let the message paint before the solver blocks the thread
  setTimeout(() => report($("cav-out"), () => {
    const t0 = performance.now();
    const frames = cavityVorticity(re, n, steps, dt);
    const [lo, hi] = extent(frames);
    cav = { frames, n, steps, dt, range: Math.max(Math.abs(lo), Math.abs(hi)) };
    $("cav-t").max = steps - 1;
    $("cav-t").value = steps - 1;
    showCavity();
    $("cav-out").textContent = `${steps} snapshots in ${((performance.now() - t0) / 1000).toFixed(2)} s; ` +
      `vorticity range [${lo.toFixed(2)}, ${hi.toFixed(2)}]`;
  }), 10);
}

function showCavity() {
  if (!cav) return;
  const t = Number($("cav-t").value);
  $("cav-t-val").textContent = `t = ${((t + 1) * cav.dt).toFixed(2)}`;
  // map the range nonlinearly so the weak interior structure stays visible
  draw($("cav-canvas"), cav.frames.map(Math.cbrt), t, cav.n, cav.n, 0, Math.cbrt(cav.range));
}

// ---- mutual information
function runMi() {
  const rho = Number($("mi-rho").value);
  report($("mi-out"), () => {
    const [est, exact] = gaussianMutualInformation(rho, Number($("mi-n").value), Number($("mi-k").value), 7);
    $("mi-out").textContent = `estimate ${est.toFixed(4)} nats, exact ${exact.toFixed(4)} nats`;
  });
}

await init();
$("wake-re").addEventListener("input", computeWake);
$("wake-field").addEventListener("change", computeWake);
$("cav-run").addEventListener("click", runCavity);
$("cav-t").addEventListener("input", showCavity);
$("mi-rho").addEventListener("input", () => { $("mi-rho-val").textContent = Number($("mi-rho").value).toFixed(2); });
$("mi-run").addEventListener("click", runMi);
computeWake();
animate();
runMi();
