// Expects `wasm-pack build --target web --out-dir www/pkg` to have run.
import init, { compare_colors, glyph_preview, PaletteExtractor } from "./pkg/gencolor_web.js";

const $ = (id) => document.getElementById(id);

function swatch(hex) {
  return `<span class="swatch" style="background:${hex}"></span> ${hex}`;
}

function fail(el, err) {
  el.innerHTML = `<span class="error">${err}</span>`;
}

// --- ΔE00 explorer

function updatePair() {
  try {
    const r = JSON.parse(compare_colors($("color-a").value, $("color-b").value));
    const lab = (c) => c.lab.map((v) => v.toFixed(2)).join(", ");
    $("pair").innerHTML =
      `${swatch(r.a.hex)} Lab(${lab(r.a)})<br>${swatch(r.b.hex)} Lab(${lab(r.b)})<br>` +
      `<strong>ΔE00 = ${r.delta_e.toFixed(3)}</strong> (ΔE76 ${r.delta_e76.toFixed(3)})`;
  } catch (e) {
    fail($("pair"), e);
  }
}

// --- Palette extraction

async function pixels(file) {
  const bitmap = await createImageBitmap(file);
  // Large photos are scaled down; the histogram barely changes.
  const scale = Math.min(1, 512 / Math.max(bitmap.width, bitmap.height));
  const w = Math.max(1, Math.round(bitmap.width * scale));
  const h = Math.max(1, Math.round(bitmap.height * scale));
  const canvas = new OffscreenCanvas(w, h);
  const ctx = canvas.getContext("2d");
  ctx.drawImage(bitmap, 0, 0, w, h);
  return { data: ctx.getImageData(0, 0, w, h).data, w, h };
}

async function extract() {
  const files = [...$("files").files];
  const status = $("extract-status");
  $("extract-glyph").innerHTML = "";
  $("extract-json").textContent = "";
  if (files.length === 0) return;
  const ex = new PaletteExtractor(Number($("stride").value), Number($("min-group").value));
  try {
    for (const f of files) {
      const { data, w, h } = await pixels(f);
      ex.add_image(new Uint8Array(data.buffer), w, h);
    }
    const palettes = JSON.parse(ex.extract());
    status.innerHTML = `${ex.count} image(s), ${palettes.length} palette(s). Top primary ${swatch(palettes[0].primary)}`;
    $("extract-glyph").innerHTML = ex.glyph(1, 240);
    $("extract-json").textContent = JSON.stringify(palettes, null, 2);
  } catch (e) {
    fail(status, e);
  } finally {
    ex.free();
  }
}

// --- Glyph preview

const defaults = [["#2878c8", 16], ["#e6d23c", 12], ["#3ca050", 8], ["#f0f0f0", 4]];

function addAccent(hex, weight) {
  const row = document.createElement("tr");
  row.innerHTML =
    `<td><input type="color" value="${hex}"></td>` +
    `<td><input type="number" value="${weight}" min="0.1" step="0.1"></td>` +
    `<td><button>✕</button></td>`;
  row.querySelector("button").onclick = () => { row.remove(); updatePreview(); };
  row.querySelectorAll("input").forEach((i) => (i.oninput = updatePreview));
  $("accents").appendChild(row);
}

function updatePreview() {
  const rows = [...$("accents").querySelectorAll("tr")];
  const colors = rows.map((r) => r.querySelector("input[type=color]").value);
  const weights = new Float64Array(rows.map((r) => Number(r.querySelector("input[type=number]").value)));
  try {
    $("preview").innerHTML = glyph_preview($("primary").value, colors, weights, 240);
  } catch (e) {
    fail($("preview"), e);
  }
}

await init();
$("color-a").oninput = updatePair;
$("color-b").oninput = updatePair;
$("files").onchange = extract;
$("min-group").onchange = extract;
$("stride").onchange = extract;
$("primary").oninput = updatePreview;
$("add-accent").onclick = () => { addAccent("#808080", 5); updatePreview(); };
defaults.forEach(([c, w]) => addAccent(c, w));
updatePair();
updatePreview();
