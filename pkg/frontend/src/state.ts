// View-state machine for the four screens: welcome -> filter (first login
// only) -> home <-> profile. All transitions go through the API; the store
// never computes scores or rankings itself.

import { ApiClient, ApiError, Demographics, Profile, RecItem } from "./api.js";

export type Screen = "welcome" | "filter" | "home" | "profile";

export interface ViewState {
  screen: Screen;
  userId: number | null;
  profile: Profile | null;
  items: RecItem[];
  flags: string[];
  phase: number | null;
  pendingSelection: Set<string>;
  warning: string | null;
  error: string | null;
  busy: boolean;
}

export function initialState(): ViewState {
  return {
    screen: "welcome",
    userId: null,
    profile: null,
    items: [],
    flags: [],
    phase: null,
    pendingSelection: new Set(),
    warning: null,
    error: null,
    busy: false,
  };
}

export class AppStore {
  state: ViewState = initialState();
  private listeners: Array<(s: ViewState) => void> = [];

  constructor(private api: ApiClient) {}

  subscribe(listener: (s: ViewState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private fail(err: unknown): void {
    this.state.error = err instanceof ApiError
      ? `${err.status}: ${err.message}`
      : String(err);
    this.state.busy = false;
    this.emit();
  }

  /** Register a brand-new guest; lands on the filter screen exactly once. */
  async signUp(demographics: Demographics): Promise<void> {
    this.state.busy = true;
    this.state.error = null;
    try {
      const { user_id } = await this.api.createUser(demographics);
      this.state.userId = user_id;
      this.state.profile = await this.api.getProfile(user_id);
      this.state.screen = "filter";
      this.state.pendingSelection = new Set();
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Returning guest: straight to home unless preferences were never set. */
  async logIn(userId: number): Promise<void> {
    this.state.busy = true;
    this.state.error = null;
    try {
      const profile = await this.api.getProfile(userId);
      this.state.userId = userId;
      this.state.profile = profile;
      if (profile.has_preferences) {
        await this.refreshRecommendations();
        this.state.screen = "home";
      } else {
        this.state.screen = "filter";
        this.state.pendingSelection = new Set();
      }
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  toggleSelection(label: string): void {
    if (this.state.pendingSelection.has(label)) {
      this.state.pendingSelection.delete(label);
    } else {
      this.state.pendingSelection.add(label);
    }
    this.emit();
  }

  /** Post the binary high-level vector, then fetch the first feed. */
  async submitPreferences(): Promise<void> {
    const { userId, profile, pendingSelection } = this.state;
    if (userId === null || profile === null) return;
    const selection = profile.hl_labels.map((label) =>
      pendingSelection.has(label) ? 1 : 0,
    );
    this.state.warning = pendingSelection.size === 0
      ? "No interests selected; recommendations will not be personalized."
      : null;
    this.state.busy = true;
    this.state.error = null;
    try {
      await this.api.setPreferences(userId, selection);
      this.state.profile = await this.api.getProfile(userId);
      await this.refreshRecommendations();
      this.state.screen = "home";
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err); // selection preserved for retry
    }
  }

  async refreshRecommendations(n = 5): Promise<void> {
    const { userId } = this.state;
    if (userId === null) return;
    const body = await this.api.getRecommendations(userId, n);
    this.state.items = body.items;
    this.state.flags = body.flags;
    this.state.phase = body.phase;
  }

  /** Ratings are gated on a prior booking, mirroring the server rule. */
  canRate(itemId: number): boolean {
    return this.state.profile?.booked.includes(itemId) ?? false;
  }

  async actOnItem(
    itemId: number,
    action: "book" | "bookmark" | "dismiss" | "rate",
    rating?: number,
  ): Promise<void> {
    const { userId } = this.state;
    if (userId === null) return;
    this.state.error = null;

    const previous = this.state.items;
    if (action === "dismiss") {
      // optimistic removal; the refresh below must keep it absent
      this.state.items = previous.filter((it) => it.item_id !== itemId);
      this.emit();
    }
    try {
      if (action === "rate") {
        if (!this.canRate(itemId)) {
          throw new ApiError(422, "item must be booked before it can be rated");
        }
        await this.api.sendRating(userId, itemId, rating ?? 0);
      } else {
        await this.api.sendFeedback(userId, itemId, action);
      }
      this.state.profile = await this.api.getProfile(userId);
      await this.refreshRecommendations();
      this.emit();
    } catch (err) {
      if (action === "dismiss") {
        this.state.items = previous; // roll the optimistic removal back
      }
      this.fail(err);
    }
  }

  async showProfile(): Promise<void> {
    const { userId } = this.state;
    if (userId === null) return;
    this.state.busy = true;
    try {
      this.state.profile = await this.api.getProfile(userId);
      this.state.screen = "profile";
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  async showHome(): Promise<void> {
    this.state.busy = true;
    try {
      await this.refreshRecommendations();
      this.state.screen = "home";
      this.state.busy = false;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }
}
