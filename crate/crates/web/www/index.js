import init, {
  match_explanation,
  inconsistencies,
  expand_template,
  shipped_templates,
} from "./pkg/inconsistency_web.js";

const $ = (id) => document.getElementById(id);

function el(tag, text, cls) {
  const node = document.createElement(tag);
  if (text !== undefined) node.textContent = text;
  if (cls) node.className = cls;
  return node;
}

function table(rows, header) {
  const t = el("table");
  if (header) {
    const tr = el("tr");
    header.forEach((h) => tr.append(el("th", h)));
    t.append(tr);
  }
  rows.forEach((row) => {
    const tr = el("tr");
    row.forEach((cell) => tr.append(el("td", String(cell))));
    t.append(tr);
  });
  return t;
}

function showMatch() {
  const out = $("match-out");
  const r = JSON.parse(match_explanation($("match-text").value));
  out.replaceChildren(el("p", "tokens: " + r.tokens.join(" "), "mono"));
  if (!r.template) {
    out.append(el("p", "No template matches.", "muted"));
    return;
  }
  const t = r.template;
  out.append(table([
    ["template", `${t.id}  ${t.pattern}`],
    ["variant", t.variant],
    ["X", t.x],
    ["Y", t.y],
  ]));
}

function showSet() {
  const out = $("gen-out");
  const r = JSON.parse(inconsistencies($("gen-text").value, $("gen-label").value));
  if (r.error) {
    out.replaceChildren(el("p", r.error, "error"));
  } else if (r.discarded) {
    out.replaceChildren(el("p", "Discarded: no negation to remove and no template matches.", "muted"));
  } else {
    out.replaceChildren(
      el("p", `${r.candidates.length} candidates, source label ${r.source_label ?? "unknown"}`),
      table(r.candidates.map((c) => [c.text, c.rule]), ["candidate", "rule"]),
    );
  }
}

function showExpansion() {
  const out = $("expand-out");
  const r = JSON.parse(expand_template($("expand-text").value));
  if (r.error) {
    out.replaceChildren(el("p", r.error, "error"));
    return;
  }
  out.replaceChildren(
    el("p", `${r.variants.length} variants (${r.label})`),
    table(r.variants.map((v, i) => [i, v])),
  );
}

await init();
$("templates").textContent = shipped_templates();
for (const [button, input, action] of [
  ["match-go", "match-text", showMatch],
  ["gen-go", "gen-text", showSet],
  ["expand-go", "expand-text", showExpansion],
]) {
  $(button).addEventListener("click", action);
  $(input).addEventListener("keydown", (e) => e.key === "Enter" && action());
}
showMatch();
showSet();
showExpansion();
