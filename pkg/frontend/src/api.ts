// Thin typed client for the challenge service. All grading happens on the
// server; this module only moves JSON.

export interface Challenge {
  session_id: string;
  svg: string;
  expires_at: number;
}

export interface Verdict {
  decision: "human" | "computer";
  score: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorOf(resp: Response): Promise<ApiError> {
  let message = `HTTP ${resp.status}`;
  try {
    const doc = await resp.json();
    if (doc && typeof doc.error === "string") message = doc.error;
  } catch {
    // keep the generic message
  }
  return new ApiError(resp.status, message);
}

export async function fetchChallenge(
  fetchFn: FetchLike,
  base = "",
): Promise<Challenge> {
  const resp = await fetchFn(`${base}/api/challenge`);
  if (!resp.ok) throw await errorOf(resp);
  return (await resp.json()) as Challenge;
}

export async function submitAnswer(
  fetchFn: FetchLike,
  sessionId: string,
  caption: string,
  base = "",
): Promise<Verdict> {
  const resp = await fetchFn(`${base}/api/answer`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ session_id: sessionId, caption }),
  });
  if (!resp.ok) throw await errorOf(resp);
  return (await resp.json()) as Verdict;
}
