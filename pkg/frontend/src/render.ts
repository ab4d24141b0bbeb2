// Pure string renderers, one per screen. Keeping these DOM-free makes the
// whole UI snapshot-testable without a browser.

import { RecItem } from "./api.js";
import { ViewState } from "./state.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function banner(state: ViewState): string {
  const parts: string[] = [];
  if (state.error) parts.push(`<p class="error">${esc(state.error)}</p>`);
  if (state.warning) parts.push(`<p class="warning">${esc(state.warning)}</p>`);
  return parts.join("");
}

export function renderWelcome(state: ViewState): string {
  return `
<section class="screen welcome">
  <h1>Welcome</h1>
  ${banner(state)}
  <form data-action="login">
    <label>Guest id <input name="user_id" type="number" min="0"></label>
    <button type="submit">Log in</button>
  </form>
  <form data-action="signup">
    <button type="submit">I'm new here</button>
  </form>
</section>`;
}

export function renderFilter(state: ViewState): string {
  const labels = state.profile?.hl_labels ?? [];
  const boxes = labels
    .map((label) => {
      const checked = state.pendingSelection.has(label) ? " checked" : "";
      return `<label class="pref-box"><input type="checkbox" data-label="${esc(label)}"${checked}> ${esc(label)}</label>`;
    })
    .join("\n    ");
  return `
<section class="screen filter">
  <h1>What are you interested in?</h1>
  ${banner(state)}
  <form data-action="submit-preferences">
    ${boxes}
    <button type="submit" ${state.busy ? "disabled" : ""}>Show me things to do</button>
  </form>
</section>`;
}

function provenanceBadges(item: RecItem): string {
  return Object.keys(item.sources)
    .sort()
    .map((name) => `<span class="badge badge-${esc(name)}">${esc(name)}</span>`)
    .join("");
}

export function renderItemCard(
  item: RecItem,
  opts: { canRate: boolean; bookmarked: boolean },
): string {
  const rateControl = opts.canRate
    ? `<select data-rate="${item.item_id}">
        <option value="">rate...</option>
        ${[1, 2, 3, 4, 5].map((r) => `<option value="${r}">${r}</option>`).join("")}
      </select>`
    : `<select data-rate="${item.item_id}" disabled title="book first to rate"><option>rate...</option></select>`;
  const bookmarkLabel = opts.bookmarked ? "bookmarked ★" : "bookmark";
  return `
  <li class="item-card" data-item="${item.item_id}">
    <span class="name">${esc(item.name)}</span>
    ${provenanceBadges(item)}${item.backfilled ? '<span class="badge badge-backfilled">backfilled</span>' : ""}
    <span class="actions">
      <button data-book="${item.item_id}">book</button>
      <button data-bookmark="${item.item_id}">${bookmarkLabel}</button>
      <button data-dismiss="${item.item_id}">not interested</button>
      ${rateControl}
    </span>
  </li>`;
}

export function renderHome(state: ViewState): string {
  const profile = state.profile;
  const cards = state.items
    .map((item) =>
      renderItemCard(item, {
        canRate: profile?.booked.includes(item.item_id) ?? false,
        bookmarked: profile?.bookmarked.includes(item.item_id) ?? false,
      }),
    )
    .join("\n");
  const phase = state.phase === null ? "" : `<span class="phase">phase ${state.phase}</span>`;
  const fallback = state.flags.includes("uniform_fallback")
    ? '<p class="warning">Showing non-personalized suggestions.</p>'
    : "";
  return `
<section class="screen home">
  <h1>Recommended for you ${phase}</h1>
  ${banner(state)}${fallback}
  <nav><button data-action="profile">My profile</button></nav>
  <ul class="feed">
${cards}
  </ul>
</section>`;
}

function bars(labels: string[], values: number[] | null): string {
  if (!values) return "<p>No preferences yet.</p>";
  return labels
    .map((label, i) => {
      const pct = Math.round(values[i] * 100);
      return `<div class="bar-row" data-bar="${esc(label)}">
      <span class="bar-label">${esc(label)}</span>
      <span class="bar" style="width:${pct}%" data-value="${values[i].toFixed(4)}"></span>
    </div>`;
    })
    .join("\n");
}

export function renderProfile(state: ViewState): string {
  const p = state.profile;
  if (!p) return '<section class="screen profile"><p>Unknown user.</p></section>';
  const demo = Object.entries(p.demographics)
    .map(([k, v]) => `<dt>${esc(k)}</dt><dd>${esc(String(v))}</dd>`)
    .join("");
  return `
<section class="screen profile">
  <h1>Your profile</h1>
  ${banner(state)}
  <nav><button data-action="home">Back to recommendations</button></nav>
  <dl class="demographics">${demo}</dl>
  <h2>Interests</h2>
  <div class="bars hl-bars">${bars(p.hl_labels, p.p_hl)}</div>
  <h2>Detailed interests</h2>
  <div class="bars ll-bars">${bars(p.ll_labels, p.p_ll)}</div>
</section>`;
}

export function render(state: ViewState): string {
  switch (state.screen) {
    case "welcome":
      return renderWelcome(state);
    case "filter":
      return renderFilter(state);
    case "home":
      return renderHome(state);
    case "profile":
      return renderProfile(state);
  }
}
