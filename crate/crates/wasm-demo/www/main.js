import init, { simulate, preference, sample_indices } from "./pkg/lbirl_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function drawChart(rows) {
  const c = $("sim-chart");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const max = Math.max(1, ...rows.map((r) => Math.max(r.t_min, r.t_std))) * 1.1;
  const x = (i) => 30 + (i * (c.width - 40)) / Math.max(1, rows.length - 1);
  const y = (v) => c.height - 20 - (v / max) * (c.height - 30);
  g.strokeStyle = "#bbb";
  g.beginPath();
  g.moveTo(30, 10);
  g.lineTo(30, c.height - 20);
  g.lineTo(c.width - 10, c.height - 20);
  g.stroke();
  g.fillStyle = "#777";
  g.fillText(max.toFixed(1), 2, 14);
  g.fillText("0", 18, c.height - 20);
  for (const [key, color] of [["t_min", "#2b6cb0"], ["t_std", "#c05621"]]) {
    g.strokeStyle = color;
    g.beginPath();
    rows.forEach((r, i) => (i ? g.lineTo(x(i), y(r[key])) : g.moveTo(x(i), y(r[key]))));
    g.stroke();
  }
}

function runSimulation() {
  $("sim-summary").textContent = "simulating…";
  setTimeout(() => {
    try {
      const res = JSON.parse(
        simulate(num("sim-scenario"), $("sim-controller").value, num("sim-hours"), num("sim-seed")),
      );
      $("sim-summary").textContent =
        `${res.controller}: mean T_min ${res.mean_t_min.toFixed(3)} Mbps, mean T_std ${res.mean_t_std.toFixed(3)} Mbps`;
      drawChart(res.hours);
    } catch (e) {
      $("sim-summary").textContent = `error: ${e.message ?? e}`;
    }
  }, 10);
}

function updatePreference() {
  const p = JSON.parse(preference(num("pref-i"), num("pref-j")));
  $("pref-out").textContent =
    `P(better preferred) = ${p.prob.toFixed(6)}\nloss = -ln P = ${p.loss.toFixed(6)}`;
}

function drawIndices() {
  const out = $("samp-out");
  out.innerHTML = "";
  try {
    const h = num("samp-h");
    const d = JSON.parse(sample_indices($("samp-kind").value, h, num("samp-l"), num("samp-seed")));
    for (const [side, idx] of [["a", d.a], ["b", d.b]]) {
      const row = document.createElement("div");
      row.className = "row";
      const on = new Set(idx);
      for (let t = 0; t < h; t++) {
        const cell = document.createElement("div");
        cell.className = `cell ${side}${on.has(t) ? " on" : ""}`;
        cell.title = `hour ${t}`;
        row.appendChild(cell);
      }
      out.appendChild(row);
    }
    const same = d.a.length === d.b.length && d.a.every((v, i) => v === d.b[i]);
    out.appendChild(document.createTextNode(same ? "identical index sets" : "different index sets"));
  } catch (e) {
    out.textContent = `error: ${e.message ?? e}`;
  }
}

await init();
$("status").textContent = "ready";
$("sim-run").onclick = runSimulation;
$("pref-i").oninput = updatePreference;
$("pref-j").oninput = updatePreference;
$("samp-run").onclick = drawIndices;
updatePreference();
drawIndices();
