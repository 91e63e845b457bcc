/** Shared payload types mirroring the training-service JSON API. */

export type Block = "PRE" | "TRAIN" | "POST";

export interface EmailPayload {
  id: string;
  subject: string;
  sender: string;
  body_plain: string;
  body_markup?: string;
}

export interface TrialPayload {
  trial: number;
  block: Block;
  total_trials: number;
  email: EmailPayload;
}

export interface SessionInfo {
  session_id: string;
  condition: string;
  total_trials: number;
  actions: string[];
}

export interface Feedback {
  correct: boolean;
  points: number;
}

export interface ResponseResult {
  trial: number;
  block: Block;
  feedback: Feedback | null;
  cumulative_points: number;
  completed: boolean;
}

export interface SummaryPayload {
  session_id: string;
  condition: string;
  improvement: {
    pre_accuracy: number;
    post_accuracy: number;
    delta_pp: number;
  };
  phishing_rate: number;
  cumulative_points: number;
  questionnaire_score: number | null;
}

export interface ServiceErrorBody {
  code: string;
  message: string;
}

export interface Answer {
  classification: "phishing" | "ham";
  confidence: 1 | 2 | 3 | 4 | 5;
  action: string;
}
