/**
 * Typed client for the annotation study HTTP API.
 *
 * Every function takes an ApiClient so tests can swap the transport;
 * the service reports domain errors as {code, message} JSON bodies,
 * surfaced here as ApiError.
 */

export type StudyInfo = {
  study_id: string;
  consent_text: string;
  session_length: number;
  n_control: number;
  n_evaluation: number;
  groups: string[];
  n_registered: number;
};

export type Registration = {
  sid: string;
  group: string;
  position: number;
  total: number;
};

export type PendingStep = {
  done: false;
  instance_id: string;
  text: string;
  choices: string[];
  position: number;
  total: number;
};

export type DoneStep = {
  done: true;
  position: number;
  total: number;
  questionnaire_submitted: boolean;
};

export type SessionStep = PendingStep | DoneStep;

export type AnnotationReceipt = {
  ok: boolean;
  position: number;
  total: number;
  done: boolean;
};

export type DifficultyRating =
  | "very_easy"
  | "easy"
  | "medium"
  | "difficult"
  | "very_difficult";

export type OrderingPreference =
  | "no_change"
  | "easy_first"
  | "difficult_first"
  | "other";

export type Questionnaire = {
  difficulty_rating: DifficultyRating;
  noticed_differences: boolean;
  ordering_preference: OrderingPreference;
  noticed_differences_text?: string;
  ordering_preference_text?: string;
  cefr_level?: string;
  years_english?: number;
  studies_participated?: number;
  studies_conducted?: number;
};

export type QuestionnaireReceipt = {
  ok: boolean;
  replaced: boolean;
};

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export type ApiClient = {
  baseUrl: string;
  fetchImpl: FetchLike;
};

export function makeClient(
  baseUrl: string,
  fetchImpl: FetchLike = (url, init) => fetch(url, init),
): ApiClient {
  return { baseUrl: baseUrl.replace(/\/+$/, ""), fetchImpl };
}

async function request<T>(
  client: ApiClient,
  method: string,
  path: string,
  body?: unknown,
): Promise<T> {
  const init: RequestInit = { method, headers: {} };
  if (body !== undefined) {
    init.headers = { "content-type": "application/json" };
    init.body = JSON.stringify(body);
  }
  const response = await client.fetchImpl(client.baseUrl + path, init);
  if (!response.ok) {
    let code = "http-error";
    let message = `${method} ${path} failed with status ${response.status}`;
    try {
      const payload = (await response.json()) as {
        code?: string;
        message?: string;
      };
      if (payload.code) code = payload.code;
      if (payload.message) message = payload.message;
    } catch {
      // non-json error body; keep the generic message
    }
    throw new ApiError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export function getStudy(client: ApiClient, studyId: string): Promise<StudyInfo> {
  return request(client, "GET", `/studies/${encodeURIComponent(studyId)}`);
}

export function register(
  client: ApiClient,
  studyId: string,
  key: string,
  consent: boolean,
): Promise<Registration> {
  return request(client, "POST", `/studies/${encodeURIComponent(studyId)}/register`, {
    key,
    consent,
  });
}

export function nextStep(client: ApiClient, sid: string): Promise<SessionStep> {
  return request(client, "GET", `/sessions/${encodeURIComponent(sid)}/next`);
}

export function submitAnnotation(
  client: ApiClient,
  sid: string,
  instanceId: string,
  choice: string,
  elapsedMs: number,
): Promise<AnnotationReceipt> {
  return request(client, "POST", `/sessions/${encodeURIComponent(sid)}/annotations`, {
    instance_id: instanceId,
    choice,
    elapsed_ms: elapsedMs,
  });
}

export function submitQuestionnaire(
  client: ApiClient,
  sid: string,
  answers: Questionnaire,
): Promise<QuestionnaireReceipt> {
  return request(
    client,
    "POST",
    `/sessions/${encodeURIComponent(sid)}/questionnaire`,
    answers,
  );
}
