// Wire types for the relabelkit HTTP API.

export interface ProposalEntry {
    class_id: number;
    name: string;
    synonyms: string[];
    exemplars: string[];
    prechecked: boolean;
}

export type TaskStage = 'initial' | 'refinement' | 'triage';

export interface AnnotationTask {
    image_id: string;
    image_uri: string;
    stage: TaskStage;
    groups: ProposalEntry[][];
    original_label: { class_id: number; name: string };
    progress: { done: number; total: number };
}

export interface LoginResponse {
    token: string;
    annotator_id: string;
    experience_tier: 'standard' | 'experienced';
}

export interface ApiErrorBody {
    code: string;
    message: string;
    field?: string;
}

export const QUALITY_CATEGORIES = [
    'no_valid_proposal',
    'low_resolution_ambiguous',
    'fine_grained_needs_expert',
    'uncommon_or_atypical_viewpoint',
] as const;

export type QualityCategory = (typeof QUALITY_CATEGORIES)[number];

export const GT_STANCES = ['agree', 'disagree', 'uncertain'] as const;

export type GtStance = (typeof GT_STANCES)[number];
