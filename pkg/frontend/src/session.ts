/**
 * Client-side session state machine.
 *
 * Owns the per-instance timer and the submission guards: each shown
 * instance is submitted at most once no matter how fast the participant
 * clicks, and the closing questionnaire is posted at most once.
 */

import {
  ApiClient,
  AnnotationReceipt,
  PendingStep,
  Questionnaire,
  QuestionnaireReceipt,
  nextStep,
  submitAnnotation,
  submitQuestionnaire,
} from "./api.js";

export type SessionPhase =
  | { kind: "loading" }
  | { kind: "annotating"; step: PendingStep; shownAt: number }
  | { kind: "questionnaire"; position: number; total: number }
  | { kind: "finished"; position: number; total: number };

export type SubmitOutcome =
  | { status: "accepted"; receipt: AnnotationReceipt }
  | { status: "ignored"; reason: string };

export type QuestionnaireOutcome =
  | { status: "accepted"; receipt: QuestionnaireReceipt }
  | { status: "ignored"; reason: string };

export type Clock = () => number;

export class SessionController {
  private current: SessionPhase = { kind: "loading" };
  private submitting = false;
  private questionnairePosted = false;

  constructor(
    private readonly client: ApiClient,
    readonly sid: string,
    private readonly now: Clock = () => Date.now(),
  ) {}

  get phase(): SessionPhase {
    return this.current;
  }

  /** Milliseconds the current instance has been on screen, at least 1. */
  elapsedMs(): number {
    if (this.current.kind !== "annotating") {
      return 0;
    }
    return Math.max(1, Math.round(this.now() - this.current.shownAt));
  }

  async start(): Promise<SessionPhase> {
    await this.advance();
    return this.current;
  }

  /**
   * Submit the participant's choice for the instance on screen.
   *
   * Returns {status: "ignored"} without any network traffic when no
   * instance is pending or another submission is already in flight, so
   * a double click produces exactly one annotation event.
   */
  async submitChoice(choice: string): Promise<SubmitOutcome> {
    if (this.current.kind !== "annotating") {
      return { status: "ignored", reason: "no instance is pending" };
    }
    if (this.submitting) {
      return { status: "ignored", reason: "a submission is already in flight" };
    }
    this.submitting = true;
    const step = this.current.step;
    try {
      const receipt = await submitAnnotation(
        this.client,
        this.sid,
        step.instance_id,
        choice,
        this.elapsedMs(),
      );
      await this.advance();
      return { status: "accepted", receipt };
    } finally {
      this.submitting = false;
    }
  }

  /**
   * Post the closing questionnaire. Repeat calls (double click, resumed
   * tab) are ignored locally; an already-submitted flag from the server
   * also arms the guard.
   */
  async sendQuestionnaire(answers: Questionnaire): Promise<QuestionnaireOutcome> {
    if (this.current.kind !== "questionnaire") {
      return { status: "ignored", reason: "the session is not awaiting a questionnaire" };
    }
    if (this.questionnairePosted) {
      return { status: "ignored", reason: "the questionnaire was already posted" };
    }
    this.questionnairePosted = true;
    let receipt: QuestionnaireReceipt;
    try {
      receipt = await submitQuestionnaire(this.client, this.sid, answers);
    } catch (error) {
      this.questionnairePosted = false;
      throw error;
    }
    this.current = {
      kind: "finished",
      position: this.current.position,
      total: this.current.total,
    };
    return { status: "accepted", receipt };
  }

  private async advance(): Promise<void> {
    const step = await nextStep(this.client, this.sid);
    if (step.done) {
      if (step.questionnaire_submitted) {
        this.questionnairePosted = true;
        this.current = { kind: "finished", position: step.position, total: step.total };
      } else {
        this.current = { kind: "questionnaire", position: step.position, total: step.total };
      }
      return;
    }
    this.current = { kind: "annotating", step, shownAt: this.now() };
  }
}
