/**
 * Wire types for the recommendation service JSON API.
 *
 * Every response is validated against these schemas before anything is
 * rendered; a response that does not match is treated as malformed and
 * never partially displayed. The client fabricates no values of its own:
 * whatever the schemas admit is exactly what the UI may show.
 */

import { z } from "zod";

export const API_VERSION = 1;

export const candidateSchema = z.object({
  activity: z.string(),
  predicted_kpi: z.number(),
  probability: z.number(),
  recommended: z.boolean(),
});

export const historyEntrySchema = z.object({
  activity: z.string(),
  kpi: z.number(),
  source: z.enum(["given", "predicted", "realized"]),
});

export const summarySchema = z.object({
  goal_value: z.number(),
  satisfied: z.boolean(),
  terminal_reward: z.number(),
  activities: z.array(z.string()),
});

export const sessionViewSchema = z.object({
  version: z.literal(API_VERSION),
  session_id: z.string(),
  history: z.array(historyEntrySchema),
  accumulated_goal: z.number(),
  omega: z.number(),
  direction: z.enum(["minimize", "maximize"]),
  projected_satisfied: z.boolean(),
  done: z.boolean(),
  candidates: z.array(candidateSchema),
  summary: summarySchema.optional(),
});

export const healthSchema = z.object({
  version: z.number(),
  status: z.string(),
  method: z.string().optional(),
});

export const dfgEdgeSchema = z.object({
  from: z.string(),
  to: z.string(),
  frequency: z.number(),
});

export const dfgSchema = z.object({
  version: z.number(),
  labels: z.array(z.string()),
  edges: z.array(dfgEdgeSchema),
});

export type Candidate = z.infer<typeof candidateSchema>;
export type HistoryEntry = z.infer<typeof historyEntrySchema>;
export type CaseSummary = z.infer<typeof summarySchema>;
export type SessionView = z.infer<typeof sessionViewSchema>;
export type Health = z.infer<typeof healthSchema>;
export type DfgDoc = z.infer<typeof dfgSchema>;

// sentinel labels the server uses in /dfg edges and step bodies
export const START_LABEL = "<START>";
export const EOS_LABEL = "<EOS>";
