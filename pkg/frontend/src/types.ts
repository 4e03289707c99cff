// Shapes returned by the audit server. The dashboard never derives its own
// statistics: everything displayed comes from these responses.

export interface StateSummary {
  checked: boolean;
  round: number;
  contests: Record<string, string>;
  cards: number;
  selected: number;
  mvrs_entered: number;
  warnings: string[];
}

export interface ContestInfo {
  id: string;
  name: string;
  status: string;
  social_choice: string;
  candidates: string[];
  n_winners: number;
  reported_winners: string[];
  cards: number;
  risk_limit: number;
  diluted_margin: number | null;
  cards_consumed: number;
  projected_remaining: number | null;
}

export interface AssertionInfo {
  contest: string;
  claim: string;
  kind: string;
  margin: number | null;
  p_value: number;
  status: string;
  risk_limit: number;
}

export interface RoundPlanInfo {
  round: number;
  targets: Record<string, number>;
  selected: number;
  newly_selected: string[];
  estimated_total: number;
}

export interface RetrievalEntry {
  card_id: string;
  container: string;
  tabulator: string;
  batch: string;
  position: number;
  contests: string[];
  entered: boolean;
}

export interface RetrievalListInfo {
  round: number;
  entries: RetrievalEntry[];
  phantoms: string[];
  not_locatable: string[];
}

export type Marks = Record<string, boolean | number>;

export interface MvrRecord {
  id: string;
  contests: Record<string, Marks>;
  not_found?: boolean;
}

export interface SubmitOutcome {
  accepted: string[];
  superseded: string[];
  p_values: Record<string, number>;
}
