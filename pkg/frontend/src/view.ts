/**
 * View models for the annotation screens.
 *
 * The choice list is presented exactly as the server sent it; the
 * server controls per-participant shuffling, so any client-side
 * reordering would corrupt the study. serializedChoiceOrder exists so
 * tests can compare the rendered order byte for byte with the payload.
 */

import { PendingStep } from "./api.js";

export type ChoiceView = {
  label: string;
  index: number;
};

export type AnnotationView = {
  instanceId: string;
  text: string;
  progressLabel: string;
  choices: ChoiceView[];
};

export function annotationView(step: PendingStep): AnnotationView {
  return {
    instanceId: step.instance_id,
    text: step.text,
    progressLabel: `Instance ${step.position} of ${step.total}`,
    choices: step.choices.map((label, index) => ({ label, index })),
  };
}

export function serializedChoiceOrder(view: AnnotationView): string {
  return JSON.stringify(view.choices.map((choice) => choice.label));
}

export type QuestionnaireField =
  | { kind: "select"; name: string; label: string; options: string[] }
  | { kind: "toggle"; name: string; label: string };

export const QUESTIONNAIRE_FIELDS: QuestionnaireField[] = [
  {
    kind: "select",
    name: "difficulty_rating",
    label: "How difficult was the task overall?",
    options: ["very_easy", "easy", "medium", "difficult", "very_difficult"],
  },
  {
    kind: "toggle",
    name: "noticed_differences",
    label: "Did you notice the instances changing in difficulty?",
  },
  {
    kind: "select",
    name: "ordering_preference",
    label: "Which ordering would you prefer?",
    options: ["no_change", "easy_first", "difficult_first", "other"],
  },
];
