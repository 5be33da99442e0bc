import init, { analyseSpectra, finiteN, simulateMisses } from "./pkg/robust_psd_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const PARAMS = {
  flat: ["level"],
  raised_cosine: ["peak", "center", "width"],
  rational_ar1: ["variance", "pole"],
};
const START = [
  { label: "flat1", family: "flat", level: 1 },
  { label: "flat2", family: "flat", level: 2 },
  { label: "ar", family: "rational_ar1", variance: 1.5, pole: 0.5 },
];

const $ = (id) => document.getElementById(id);

function addRow(m) {
  const tr = document.createElement("tr");
  const fam = m.family;
  const names = PARAMS[fam];
  const cell = (i) => `<td><input type="number" step="0.1" class="p" value="${names[i] !== undefined ? m[names[i]] : ""}"></td>`;
  tr.innerHTML =
    `<td><input class="label" value="${m.label}" size="8"></td>` +
    `<td><select class="family">${Object.keys(PARAMS)
      .map((f) => `<option${f === fam ? " selected" : ""}>${f}</option>`)
      .join("")}</select></td>` +
    cell(0) + cell(1) + cell(2) +
    `<td><button class="rm">remove</button></td>`;
  tr.querySelector(".rm").onclick = () => tr.remove();
  $("members").querySelector("tbody").appendChild(tr);
}

function members() {
  return [...$("members").querySelectorAll("tbody tr")].map((tr) => {
    const family = tr.querySelector(".family").value;
    const vals = [...tr.querySelectorAll(".p")].map((i) => parseFloat(i.value));
    const m = { label: tr.querySelector(".label").value, family };
    PARAMS[family].forEach((name, i) => (m[name] = vals[i]));
    return m;
  });
}

function base() {
  return { members: members(), sigma2: parseFloat($("sigma2").value), grid_size: parseInt($("grid").value, 10) };
}

function nList(id) {
  return $(id).value.split(",").map((s) => parseInt(s.trim(), 10)).filter((n) => n > 0);
}

function call(fn, req, out) {
  const res = JSON.parse(fn(JSON.stringify(req)));
  if (res.error) {
    $(out).innerHTML = `<p class="err">${res.error}</p>`;
    return null;
  }
  return res;
}

function plot(canvas, series, { xlabel, ylabel, logx = false }) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 60, R = 150, T = 12, B = 36;
  ctx.clearRect(0, 0, W, H);
  const fx = (x) => (logx ? Math.log2(x) : x);
  const pts = series.flatMap((s) => s.x.map((x, i) => [fx(x), s.y[i]])).filter((p) => Number.isFinite(p[1]));
  if (!pts.length) return;
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const pad = 0.05 * (y1 - y0); y0 -= pad; y1 += pad;
  const sx = (x) => L + ((fx(x) - x0) / (x1 - x0)) * (W - L - R);
  const sy = (y) => H - B - ((y - y0) / (y1 - y0)) * (H - T - B);
  ctx.strokeStyle = "#999"; ctx.fillStyle = "#444"; ctx.font = "11px sans-serif";
  ctx.beginPath(); ctx.moveTo(L, T); ctx.lineTo(L, H - B); ctx.lineTo(W - R, H - B); ctx.stroke();
  for (let k = 0; k <= 4; k++) {
    const y = y0 + (k / 4) * (y1 - y0);
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
    const x = x0 + (k / 4) * (x1 - x0);
    const label = logx ? Math.round(2 ** x) : x.toFixed(2);
    ctx.fillText(label, L + (k / 4) * (W - L - R) - 8, H - B + 14);
  }
  ctx.fillText(xlabel, (W - R) / 2, H - 4);
  ctx.save(); ctx.translate(12, T + 40); ctx.fillText(ylabel, 0, 0); ctx.restore();
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color || COLORS[k % COLORS.length];
    ctx.setLineDash(s.dash || []);
    ctx.lineWidth = s.width || 1.5;
    ctx.beginPath();
    let started = false;
    s.x.forEach((x, i) => {
      if (!Number.isFinite(s.y[i])) { started = false; return; }
      if (started) ctx.lineTo(sx(x), sy(s.y[i])); else ctx.moveTo(sx(x), sy(s.y[i]));
      started = true;
      if (s.markers) ctx.fillRect(sx(x) - 2, sy(s.y[i]) - 2, 4, 4);
    });
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, W - R + 8, T + 14 * (k + 1));
  });
}

const fmt = (x) => (x === null || x === undefined ? "n/a" : Number(x).toPrecision(6));

function runSpectra() {
  const r = call(analyseSpectra, base(), "spectra-out");
  if (!r) return;
  const series = r.curves.map((c) => ({ label: c.label, x: c.omega, y: c.values }));
  series.push({ label: "envelope", x: r.envelope.omega, y: r.envelope.values, color: "#000", dash: [5, 4], width: 2 });
  plot($("psd-plot"), series, { xlabel: "frequency (rad)", ylabel: "PSD" });
  const dom = r.search.dominated_index;
  const rows = r.search.reports
    .map((rep, k) =>
      `<tr><td>${k}</td><td>${rep.candidate_label}</td><td>${fmt(r.exponents[k])}</td><td>${fmt(rep.margin)}</td>` +
      `<td>${fmt(rep.boundedness_min)}</td><td>${rep.verdict ? "yes" : "no"}</td></tr>`)
    .join("");
  $("spectra-out").innerHTML =
    `<p>${dom === null ? "No member is dominated." : `Dominated member: <b>${r.search.reports[dom].candidate_label}</b>.`}
     Genie bound ${fmt(r.genie_value)} (member ${r.genie_index}).</p>
     <table><tr><th>#</th><th>member</th><th>error exponent</th><th>worst margin</th><th>min log argument</th><th>dominated</th></tr>${rows}</table>`;
}

function runFinite() {
  const req = { ...base(), candidate: parseInt($("candidate").value, 10), n_values: nList("fn-n") };
  const r = call(finiteN, req, "finite-out");
  if (!r) return;
  const names = req.members.map((m) => m.label);
  const series = names.map((name, k) => ({
    label: name, x: r.n_values, y: r.kl_rates.map((row) => row[k]), markers: true,
  }));
  names.forEach((name, k) =>
    series.push({ label: `${name} limit`, x: r.n_values, y: r.n_values.map(() => r.exponents[k]), dash: [4, 4], color: COLORS[k % COLORS.length] }));
  plot($("kl-plot"), series, { xlabel: "n", ylabel: "KL rate", logx: true });
  const head = names.map((n) => `<th>${n}</th>`).join("");
  const rows = r.n_values
    .map((n, i) => `<tr><td>${n}</td>${r.ratios[i].map((v) => `<td>${v === null ? "diverges" : fmt(v)}</td>`).join("")}</tr>`)
    .join("");
  $("finite-out").innerHTML =
    `<p>Ratio expectations of candidate ${names[req.candidate] ?? req.candidate} against each member
     (values at most 1 mean the candidate is dominated at that length).</p>
     <table><tr><th>n</th>${head}</tr>${rows}</table>`;
}

function runSim() {
  const req = {
    ...base(),
    detector: parseInt($("det").value, 10),
    truth: parseInt($("truth").value, 10),
    n_values: nList("sim-n"),
    trials: parseInt($("trials").value, 10),
    alpha: parseFloat($("alpha").value),
    seed: parseInt($("seed").value, 10),
  };
  $("sim-out").textContent = "running...";
  setTimeout(() => {
    const r = call(simulateMisses, req, "sim-out");
    if (!r) return;
    plot($("sim-plot"), [
      { label: "miss exponent", x: r.n_values, y: r.miss_log.map((v) => (v === null ? NaN : v)), markers: true },
      { label: "matched limit", x: r.n_values, y: r.n_values.map(() => r.truth_exponent), dash: [4, 4], color: "#000" },
    ], { xlabel: "n", ylabel: "-(1/n) log miss", logx: true });
    const rows = r.n_values
      .map((n, i) => `<tr><td>${n}</td><td>${fmt(r.threshold[i])}</td><td>${fmt(r.fa_hat[i])}</td><td>${fmt(r.miss_hat[i])}</td><td>${r.miss_log[i] === null ? "censored" : fmt(r.miss_log[i])}</td></tr>`)
      .join("");
    $("sim-out").innerHTML =
      `<table><tr><th>n</th><th>threshold</th><th>false alarm</th><th>miss</th><th>miss exponent</th></tr>${rows}</table>`;
  }, 10);
}

await init();
START.forEach(addRow);
$("add").onclick = () => addRow({ label: `m${members().length}`, family: "flat", level: 1 });
$("run-spectra").onclick = runSpectra;
$("run-finite").onclick = runFinite;
$("run-sim").onclick = runSim;
runSpectra();
