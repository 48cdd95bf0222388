// Minimal canvas charts: time series over the rolling window, stacked
// affect bands, and threshold gauges. No external chart dependency keeps
// the build a plain tsc pass.

export interface Series {
  label: string;
  color: string;
  points: Array<{ t: number; v: number | null }>;
}

const GRID = "#2a2f3a";
const TEXT = "#9aa4b2";

function prepare(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
  const dpr = window.devicePixelRatio || 1;
  const { clientWidth, clientHeight } = canvas;
  if (canvas.width !== clientWidth * dpr || canvas.height !== clientHeight * dpr) {
    canvas.width = clientWidth * dpr;
    canvas.height = clientHeight * dpr;
  }
  const ctx = canvas.getContext("2d")!;
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, clientWidth, clientHeight);
  return ctx;
}

export function drawSeries(
  canvas: HTMLCanvasElement,
  series: Series[],
  windowMs: number,
  now: number,
  yMin: number,
  yMax: number,
): void {
  const ctx = prepare(canvas);
  const w = canvas.clientWidth;
  const h = canvas.clientHeight;
  const x0 = now - windowMs;

  ctx.strokeStyle = GRID;
  ctx.lineWidth = 1;
  for (let i = 1; i < 4; i++) {
    const y = (h * i) / 4;
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(w, y);
    ctx.stroke();
  }

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    for (const p of s.points) {
      if (p.v === null) {
        pen = false;
        continue;
      }
      const x = ((p.t - x0) / windowMs) * w;
      const y = h - ((p.v - yMin) / (yMax - yMin)) * h;
      if (pen) {
        ctx.lineTo(x, y);
      } else {
        ctx.moveTo(x, y);
        pen = true;
      }
    }
    ctx.stroke();
  }

  ctx.fillStyle = TEXT;
  ctx.font = "10px sans-serif";
  let lx = 6;
  for (const s of series) {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, lx, 12);
    lx += ctx.measureText(s.label).width + 12;
  }
  ctx.fillStyle = TEXT;
  ctx.fillText(String(yMax), w - 28, 12);
  ctx.fillText(String(yMin), w - 28, h - 4);
}

export function drawBands(
  canvas: HTMLCanvasElement,
  points: Array<{ t: number; parts: number[] }>,
  colors: string[],
  labels: string[],
  windowMs: number,
  now: number,
): void {
  const ctx = prepare(canvas);
  const w = canvas.clientWidth;
  const h = canvas.clientHeight;
  const x0 = now - windowMs;
  const bar = Math.max(1, w / (windowMs / 1000));

  for (const p of points) {
    const x = ((p.t - x0) / windowMs) * w;
    let y = h;
    for (let i = 0; i < p.parts.length; i++) {
      const seg = p.parts[i] * h;
      ctx.fillStyle = colors[i];
      ctx.fillRect(x, y - seg, bar, seg);
      y -= seg;
    }
  }

  ctx.font = "10px sans-serif";
  let lx = 6;
  for (let i = 0; i < labels.length; i++) {
    ctx.fillStyle = colors[i];
    ctx.fillText(labels[i], lx, 12);
    lx += ctx.measureText(labels[i]).width + 12;
  }
}

export function drawGauge(
  canvas: HTMLCanvasElement,
  value: number,
  zoneColor: string,
  threshold: number | null,
): void {
  const ctx = prepare(canvas);
  const w = canvas.clientWidth;
  const h = canvas.clientHeight;
  ctx.fillStyle = GRID;
  ctx.fillRect(0, h / 2 - 6, w, 12);
  ctx.fillStyle = zoneColor;
  ctx.fillRect(0, h / 2 - 6, Math.max(0, Math.min(1, value)) * w, 12);
  if (threshold !== null) {
    ctx.fillStyle = "#ff5c5c";
    ctx.fillRect(threshold * w - 1, h / 2 - 10, 2, 20);
  }
  ctx.fillStyle = "#e8edf4";
  ctx.font = "12px sans-serif";
  ctx.fillText(value.toFixed(2), w / 2 - 12, h / 2 - 12);
}
