import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, Profile, RecItem } from "../src/api.js";
import { AppStore } from "../src/state.js";

function profile(overrides: Partial<Profile> = {}): Profile {
  return {
    user_id: 0,
    demographics: { age: 2 },
    has_preferences: false,
    hl_labels: ["Culture", "Leisure", "Sports"],
    p_hl: null,
    ll_labels: ["Culture", "Leisure", "Sports"],
    p_ll: null,
    has_feedback: false,
    booked: [],
    bookmarked: [],
    dismissed: [],
    rated: [],
    ...overrides,
  };
}

function items(ids: number[]): RecItem[] {
  return ids.map((id) => ({
    item_id: id,
    name: `item ${id}`,
    score: 1 - id / 100,
    sources: { content: 1 },
    backfilled: false,
  }));
}

interface FakeApi {
  createUser: ReturnType<typeof vi.fn>;
  getProfile: ReturnType<typeof vi.fn>;
  setPreferences: ReturnType<typeof vi.fn>;
  getRecommendations: ReturnType<typeof vi.fn>;
  sendFeedback: ReturnType<typeof vi.fn>;
  sendRating: ReturnType<typeof vi.fn>;
}

function fakeApi(): FakeApi {
  return {
    createUser: vi.fn().mockResolvedValue({ user_id: 0 }),
    getProfile: vi.fn().mockResolvedValue(profile()),
    setPreferences: vi.fn().mockResolvedValue({}),
    getRecommendations: vi.fn().mockResolvedValue({
      user_id: 0,
      phase: 1,
      items: items([6, 7, 8, 27, 28]),
      flags: [],
    }),
    sendFeedback: vi.fn().mockResolvedValue({ status: "recorded" }),
    sendRating: vi.fn().mockResolvedValue({ status: "recorded" }),
  };
}

function store(api: FakeApi): AppStore {
  return new AppStore(api as unknown as ApiClient);
}

describe("first login flow", () => {
  it("new users land on the filter screen exactly once", async () => {
    const api = fakeApi();
    const app = store(api);
    await app.signUp({
      age_years: 30, ac_deg: 2, budget: 2, accom: 2, gender: "Female",
      job: "white collar", region: "North Europe", group_comp: "2Adlt",
    });
    expect(app.state.screen).toBe("filter");

    app.toggleSelection("Leisure");
    api.getProfile.mockResolvedValue(profile({ has_preferences: true }));
    await app.submitPreferences();
    expect(app.state.screen).toBe("home");
    expect(api.setPreferences).toHaveBeenCalledWith(0, [0, 1, 0]);
    expect(app.state.items).toHaveLength(5);

    // a returning visit with preferences set skips the filter screen
    const again = store(api);
    await again.logIn(0);
    expect(again.state.screen).toBe("home");
  });

  it("empty selection is allowed but warned about", async () => {
    const api = fakeApi();
    const app = store(api);
    await app.signUp({
      age_years: 30, ac_deg: 2, budget: 2, accom: 2, gender: "Male",
      job: "blue collar", region: "Asia", group_comp: "1Adlt",
    });
    await app.submitPreferences();
    expect(api.setPreferences).toHaveBeenCalledWith(0, [0, 0, 0]);
    expect(app.state.warning).toMatch(/not be personalized/);
    expect(app.state.screen).toBe("home");
  });

  it("select-all posts the all-ones vector", async () => {
    const api = fakeApi();
    const app = store(api);
    await app.signUp({
      age_years: 30, ac_deg: 2, budget: 2, accom: 2, gender: "Male",
      job: "blue collar", region: "Asia", group_comp: "1Adlt",
    });
    for (const label of ["Culture", "Leisure", "Sports"]) {
      app.toggleSelection(label);
    }
    await app.submitPreferences();
    expect(api.setPreferences).toHaveBeenCalledWith(0, [1, 1, 1]);
  });

  it("API failure preserves the selection for retry", async () => {
    const api = fakeApi();
    api.setPreferences.mockRejectedValue(new ApiError(500, "boom"));
    const app = store(api);
    await app.signUp({
      age_years: 30, ac_deg: 2, budget: 2, accom: 2, gender: "Male",
      job: "blue collar", region: "Asia", group_comp: "1Adlt",
    });
    app.toggleSelection("Sports");
    await app.submitPreferences();
    expect(app.state.screen).toBe("filter");
    expect(app.state.error).toContain("boom");
    expect(app.state.pendingSelection.has("Sports")).toBe(true);
  });
});

describe("item actions", () => {
  async function homeStore(api: FakeApi): Promise<AppStore> {
    const app = store(api);
    api.getProfile.mockResolvedValue(profile({ has_preferences: true }));
    await app.logIn(0);
    return app;
  }

  it("dismiss removes the item optimistically and refreshes", async () => {
    const api = fakeApi();
    const app = await homeStore(api);
    let duringRequest: number[] = [];
    api.sendFeedback.mockImplementation(async () => {
      duringRequest = app.state.items.map((it) => it.item_id);
      api.getRecommendations.mockResolvedValue({
        user_id: 0, phase: 1, items: items([7, 8, 27, 28, 14]), flags: [],
      });
      return { status: "recorded" };
    });
    await app.actOnItem(6, "dismiss");
    expect(duringRequest).toEqual([7, 8, 27, 28]); // optimistic, pre-refresh
    expect(app.state.items.map((it) => it.item_id)).toEqual([7, 8, 27, 28, 14]);
    expect(api.sendFeedback).toHaveBeenCalledWith(0, 6, "dismiss");
  });

  it("failed dismiss rolls back the optimistic removal", async () => {
    const api = fakeApi();
    const app = await homeStore(api);
    api.sendFeedback.mockRejectedValue(new ApiError(409, "conflict"));
    await app.actOnItem(6, "dismiss");
    expect(app.state.items.map((it) => it.item_id)).toEqual([6, 7, 8, 27, 28]);
    expect(app.state.error).toContain("conflict");
  });

  it("rating is blocked until the item is booked", async () => {
    const api = fakeApi();
    const app = await homeStore(api);
    expect(app.canRate(6)).toBe(false);
    await app.actOnItem(6, "rate", 5);
    expect(api.sendRating).not.toHaveBeenCalled();
    expect(app.state.error).toMatch(/booked before/);

    api.getProfile.mockResolvedValue(
      profile({ has_preferences: true, booked: [6] }),
    );
    await app.actOnItem(6, "book");
    expect(app.canRate(6)).toBe(true);
    await app.actOnItem(6, "rate", 5);
    expect(api.sendRating).toHaveBeenCalledWith(0, 6, 5);
  });

  it("every action maps to exactly one mutation call", async () => {
    const api = fakeApi();
    const app = await homeStore(api);
    await app.actOnItem(7, "bookmark");
    expect(api.sendFeedback).toHaveBeenCalledTimes(1);
    await app.actOnItem(8, "book");
    expect(api.sendFeedback).toHaveBeenCalledTimes(2);
    expect(api.sendRating).not.toHaveBeenCalled();
  });
});

describe("profile screen", () => {
  it("renders from the API verbatim", async () => {
    const api = fakeApi();
    api.getProfile.mockResolvedValue(profile({
      has_preferences: true,
      p_hl: [0.2, 1.0, 0.0],
      p_ll: [0.2, 1.0, 0.0],
    }));
    const app = store(api);
    await app.logIn(0);
    await app.showProfile();
    expect(app.state.screen).toBe("profile");
    expect(app.state.profile?.p_hl).toEqual([0.2, 1.0, 0.0]);
  });

  it("unknown user surfaces an error state", async () => {
    const api = fakeApi();
    api.getProfile.mockRejectedValue(new ApiError(404, "unknown user 99"));
    const app = store(api);
    await app.logIn(99);
    expect(app.state.error).toContain("unknown user");
    expect(app.state.screen).toBe("welcome");
  });
});
