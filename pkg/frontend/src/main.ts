/**
 * Browser entry point: join form, annotation loop, questionnaire.
 *
 * The session id is kept in localStorage so a reloaded tab resumes
 * where it stopped; the server is the source of truth for position.
 */

import { ApiError, getStudy, makeClient, register } from "./api.js";
import { SessionController } from "./session.js";
import {
  renderAnnotation,
  renderError,
  renderFinished,
  renderQuestionnaire,
} from "./dom.js";
import { annotationView } from "./view.js";

const STORAGE_KEY = "anncur-session";

function requireElement<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing #${id} in the page shell`);
  }
  return el as T;
}

async function renderLoop(controller: SessionController, stage: HTMLElement): Promise<void> {
  const phase = controller.phase;
  if (phase.kind === "annotating") {
    renderAnnotation(document, stage, annotationView(phase.step), (label) => {
      void controller
        .submitChoice(label)
        .then(() => renderLoop(controller, stage))
        .catch((error) => renderError(document, stage, describe(error)));
    });
    return;
  }
  if (phase.kind === "questionnaire") {
    renderQuestionnaire(document, stage, (answers) => {
      void controller
        .sendQuestionnaire(answers)
        .then(() => renderLoop(controller, stage))
        .catch((error) => renderError(document, stage, describe(error)));
    });
    return;
  }
  if (phase.kind === "finished") {
    renderFinished(document, stage, phase.total);
    window.localStorage.removeItem(STORAGE_KEY);
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) {
    return `${error.code}: ${error.message}`;
  }
  return error instanceof Error ? error.message : String(error);
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const client = makeClient(params.get("api") ?? "");
  const studyId = params.get("study") ?? "";

  const joinForm = requireElement<HTMLFormElement>("join-form");
  const stage = requireElement<HTMLElement>("stage");
  const consentBox = requireElement<HTMLParagraphElement>("consent-text");

  const resume = window.localStorage.getItem(STORAGE_KEY);
  if (resume !== null) {
    joinForm.hidden = true;
    const controller = new SessionController(client, resume);
    await controller.start();
    await renderLoop(controller, stage);
    return;
  }

  try {
    const info = await getStudy(client, studyId);
    consentBox.textContent = info.consent_text;
  } catch (error) {
    renderError(document, stage, describe(error));
    return;
  }

  joinForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const keyField = joinForm.querySelector<HTMLInputElement>("input[name=key]");
    const key = (keyField?.value ?? "").trim();
    const consent = joinForm.querySelector<HTMLInputElement>("input[name=consent]");
    void register(client, studyId, key, consent?.checked ?? false)
      .then(async (registration) => {
        window.localStorage.setItem(STORAGE_KEY, registration.sid);
        joinForm.hidden = true;
        const controller = new SessionController(client, registration.sid);
        await controller.start();
        await renderLoop(controller, stage);
      })
      .catch((error) => renderError(document, stage, describe(error)));
  });
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  void boot();
}
