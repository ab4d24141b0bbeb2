// DOM bootstrap: one store, one root element, event delegation.

import { ApiClient, Demographics } from "./api.js";
import { render } from "./render.js";
import { AppStore } from "./state.js";

const BASE_URL =
  (window as unknown as { TOURREC_BASE_URL?: string }).TOURREC_BASE_URL ??
  "http://127.0.0.1:8000";

// demo demographics for the "I'm new here" path; a real deployment would
// collect these at check-in
const GUEST: Demographics = {
  age_years: 33,
  ac_deg: 3,
  budget: 2,
  accom: 2,
  gender: "Female",
  job: "white collar",
  region: "North Europe",
  group_comp: "2Adlt",
};

const store = new AppStore(new ApiClient(BASE_URL));
const root = document.getElementById("app")!;

store.subscribe((state) => {
  root.innerHTML = render(state);
});

root.addEventListener("submit", (event) => {
  const form = event.target as HTMLFormElement;
  event.preventDefault();
  const action = form.dataset.action;
  if (action === "login") {
    const input = form.querySelector<HTMLInputElement>("input[name=user_id]");
    const id = input?.value ? Number(input.value) : NaN;
    if (!Number.isNaN(id)) void store.logIn(id);
  } else if (action === "signup") {
    void store.signUp(GUEST);
  } else if (action === "submit-preferences") {
    void store.submitPreferences();
  }
});

root.addEventListener("change", (event) => {
  const el = event.target as HTMLElement;
  const label = el.dataset.label;
  if (label !== undefined) {
    store.toggleSelection(label);
    return;
  }
  const rate = el.dataset.rate;
  if (rate !== undefined) {
    const value = Number((el as HTMLSelectElement).value);
    if (value >= 1) void store.actOnItem(Number(rate), "rate", value);
  }
});

root.addEventListener("click", (event) => {
  const el = event.target as HTMLElement;
  if (el.dataset.book !== undefined) {
    void store.actOnItem(Number(el.dataset.book), "book");
  } else if (el.dataset.bookmark !== undefined) {
    void store.actOnItem(Number(el.dataset.bookmark), "bookmark");
  } else if (el.dataset.dismiss !== undefined) {
    void store.actOnItem(Number(el.dataset.dismiss), "dismiss");
  } else if (el.dataset.action === "profile") {
    void store.showProfile();
  } else if (el.dataset.action === "home") {
    void store.showHome();
  }
});

root.innerHTML = render(store.state);
