/** Minimal SVG line charts; no drawing dependencies. */

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Series {
  name: string;
  y: (number | null)[];
}

export interface CurveChartOptions {
  width?: number;
  height?: number;
  /** Per-point [lower, upper] confidence band drawn behind the lines. */
  band?: [number, number][];
  /** Horizontal reference line (e.g. the true ability in a CAT replay). */
  refLine?: number;
  yLabel?: string;
}

const PALETTE = ["#2563eb", "#dc2626", "#059669", "#9333ea", "#ea580c", "#0891b2"];
const MARGIN = { top: 12, right: 14, bottom: 26, left: 42 };

function el(name: string, attrs: Record<string, string | number>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, String(v));
  return node;
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!isFinite(lo)) return [0, 1];
  if (lo === hi) return [lo - 1, hi + 1];
  return [lo, hi];
}

/**
 * Render series sharing one x vector as an SVG line chart.
 * Null x or y values break the line rather than interpolating across gaps.
 */
export function curveChart(x: (number | null)[], series: Series[], options: CurveChartOptions = {}): SVGSVGElement {
  const width = options.width ?? 560;
  const height = options.height ?? 260;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;

  const yValues: number[] = [];
  for (const s of series) for (const v of s.y) if (v !== null && isFinite(v)) yValues.push(v);
  if (options.band) for (const [lo, hi] of options.band) yValues.push(lo, hi);
  if (options.refLine !== undefined) yValues.push(options.refLine);
  const xValues = x.filter((v): v is number => v !== null && isFinite(v));
  const [xMin, xMax] = extent(xValues);
  const [yMin, yMax] = extent(yValues);

  const sx = (v: number) => MARGIN.left + ((v - xMin) / (xMax - xMin)) * innerW;
  const sy = (v: number) => MARGIN.top + (1 - (v - yMin) / (yMax - yMin)) * innerH;

  const svg = el("svg", { width, height, viewBox: `0 0 ${width} ${height}`, role: "img" }) as SVGSVGElement;
  svg.classList.add("curve-chart");

  if (options.band && options.band.length === x.length && xValues.length === x.length && x.length > 0) {
    const upper = x.map((xv, i) => `${sx(xv as number)},${sy(options.band![i]![1])}`);
    const lower = x.map((xv, i) => `${sx(xv as number)},${sy(options.band![i]![0])}`).reverse();
    const poly = el("polygon", { points: [...upper, ...lower].join(" "), fill: "#2563eb22", stroke: "none" });
    poly.classList.add("ci-band");
    svg.appendChild(poly);
  }

  for (const edge of [yMin, yMax]) {
    svg.appendChild(el("line", { x1: MARGIN.left, x2: width - MARGIN.right, y1: sy(edge), y2: sy(edge), stroke: "#d4d4d8", "stroke-width": 1 }));
    const label = el("text", { x: MARGIN.left - 6, y: sy(edge) + 4, "text-anchor": "end", "font-size": 11, fill: "#52525b" });
    label.textContent = edge.toFixed(2);
    svg.appendChild(label);
  }
  for (const edge of [xMin, xMax]) {
    const label = el("text", { x: sx(edge), y: height - 8, "text-anchor": "middle", "font-size": 11, fill: "#52525b" });
    label.textContent = edge.toFixed(edge % 1 === 0 ? 0 : 1);
    svg.appendChild(label);
  }

  if (options.refLine !== undefined) {
    const ref = el("line", {
      x1: MARGIN.left, x2: width - MARGIN.right,
      y1: sy(options.refLine), y2: sy(options.refLine),
      stroke: "#71717a", "stroke-dasharray": "4 3", "stroke-width": 1,
    });
    ref.classList.add("ref-line");
    svg.appendChild(ref);
  }

  series.forEach((s, idx) => {
    let d = "";
    let pen = false;
    s.y.forEach((v, i) => {
      const xv = x[i];
      if (v === null || !isFinite(v) || xv === null || xv === undefined || !isFinite(xv)) {
        pen = false;
        return;
      }
      d += `${pen ? "L" : "M"}${sx(xv)},${sy(v)}`;
      pen = true;
    });
    const path = el("path", { d, fill: "none", stroke: PALETTE[idx % PALETTE.length]!, "stroke-width": 2 });
    path.classList.add("series");
    path.dataset.name = s.name;
    svg.appendChild(path);
    const label = el("text", { x: width - MARGIN.right, y: MARGIN.top + 12 * (idx + 1), "text-anchor": "end", "font-size": 11, fill: PALETTE[idx % PALETTE.length]! });
    label.textContent = s.name;
    svg.appendChild(label);
  });

  return svg;
}
