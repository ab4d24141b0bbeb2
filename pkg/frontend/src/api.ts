// Typed client for the recommender service. The UI performs no
// recommendation logic of its own: everything rendered comes from here.

export interface Demographics {
  age?: number;
  age_years?: number;
  ac_deg: number;
  budget: number;
  accom: number;
  gender: string;
  job: string;
  region: string;
  group_comp: string;
}

export interface RecItem {
  item_id: number;
  name: string;
  score: number;
  sources: Record<string, number>;
  backfilled: boolean;
}

export interface RecommendationsResponse {
  user_id: number;
  phase: number;
  items: RecItem[];
  flags: string[];
}

export interface Profile {
  user_id: number;
  demographics: Record<string, number | string>;
  has_preferences: boolean;
  hl_labels: string[];
  p_hl: number[] | null;
  ll_labels: string[];
  p_ll: number[] | null;
  has_feedback: boolean;
  booked: number[];
  bookmarked: number[];
  dismissed: number[];
  rated: number[];
}

export type FeedbackKind = "book" | "bookmark" | "dismiss";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
  }

  createUser(demographics: Demographics): Promise<{ user_id: number }> {
    return this.request("/users", {
      method: "POST",
      body: JSON.stringify(demographics),
    });
  }

  getProfile(userId: number): Promise<Profile> {
    return this.request(`/users/${userId}/profile`);
  }

  setPreferences(userId: number, selection: number[]): Promise<unknown> {
    return this.request(`/users/${userId}/preferences`, {
      method: "PUT",
      body: JSON.stringify({ selection }),
    });
  }

  getRecommendations(userId: number, n = 5): Promise<RecommendationsResponse> {
    return this.request(`/users/${userId}/recommendations?n=${n}`);
  }

  sendFeedback(userId: number, itemId: number, kind: FeedbackKind): Promise<unknown> {
    return this.request(`/users/${userId}/feedback`, {
      method: "POST",
      body: JSON.stringify({ item_id: itemId, kind }),
    });
  }

  sendRating(userId: number, itemId: number, rating: number): Promise<unknown> {
    return this.request(`/users/${userId}/ratings`, {
      method: "POST",
      body: JSON.stringify({ item_id: itemId, rating }),
    });
  }
}
