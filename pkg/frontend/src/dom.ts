/**
 * DOM rendering. Thin on purpose: every decision about what to show
 * lives in the view models, these functions only build elements.
 */

import { AnnotationView, QUESTIONNAIRE_FIELDS } from "./view.js";
import { Questionnaire } from "./api.js";

export function renderAnnotation(
  doc: Document,
  container: HTMLElement,
  view: AnnotationView,
  onChoice: (label: string) => void,
): void {
  container.replaceChildren();

  const progress = doc.createElement("p");
  progress.className = "progress";
  progress.textContent = view.progressLabel;
  container.appendChild(progress);

  const text = doc.createElement("blockquote");
  text.className = "instance-text";
  text.textContent = view.text;
  container.appendChild(text);

  const list = doc.createElement("div");
  list.className = "choices";
  for (const choice of view.choices) {
    const button = doc.createElement("button");
    button.type = "button";
    button.className = "choice";
    button.dataset.index = String(choice.index);
    button.textContent = choice.label;
    button.addEventListener("click", () => onChoice(choice.label));
    list.appendChild(button);
  }
  container.appendChild(list);
}

export function renderedChoiceLabels(container: HTMLElement): string[] {
  const labels: string[] = [];
  container.querySelectorAll("button.choice").forEach((button) => {
    labels.push(button.textContent ?? "");
  });
  return labels;
}

export function renderQuestionnaire(
  doc: Document,
  container: HTMLElement,
  onSubmit: (answers: Questionnaire) => void,
): void {
  container.replaceChildren();

  const heading = doc.createElement("h2");
  heading.textContent = "Closing questionnaire";
  container.appendChild(heading);

  const form = doc.createElement("form");
  for (const field of QUESTIONNAIRE_FIELDS) {
    const row = doc.createElement("label");
    row.className = "field";
    row.textContent = field.label + " ";
    if (field.kind === "select") {
      const select = doc.createElement("select");
      select.name = field.name;
      for (const option of field.options) {
        const item = doc.createElement("option");
        item.value = option;
        item.textContent = option.replace(/_/g, " ");
        select.appendChild(item);
      }
      row.appendChild(select);
    } else {
      const box = doc.createElement("input");
      box.type = "checkbox";
      box.name = field.name;
      row.appendChild(box);
    }
    form.appendChild(row);
  }

  const submit = doc.createElement("button");
  submit.type = "submit";
  submit.textContent = "Finish";
  form.appendChild(submit);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const rating = form.querySelector<HTMLSelectElement>(
      "select[name=difficulty_rating]",
    );
    const noticed = form.querySelector<HTMLInputElement>(
      "input[name=noticed_differences]",
    );
    const preference = form.querySelector<HTMLSelectElement>(
      "select[name=ordering_preference]",
    );
    onSubmit({
      difficulty_rating: (rating?.value ?? "medium") as Questionnaire["difficulty_rating"],
      noticed_differences: noticed?.checked ?? false,
      ordering_preference: (preference?.value ?? "no_change") as Questionnaire["ordering_preference"],
    });
  });
  container.appendChild(form);
}

export function renderFinished(
  doc: Document,
  container: HTMLElement,
  total: number,
): void {
  container.replaceChildren();
  const message = doc.createElement("p");
  message.className = "finished";
  message.textContent = `All ${total} instances are annotated. Thank you for participating.`;
  container.appendChild(message);
}

export function renderError(doc: Document, container: HTMLElement, message: string): void {
  const banner = doc.createElement("p");
  banner.className = "error";
  banner.textContent = message;
  container.prepend(banner);
}
