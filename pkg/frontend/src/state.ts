import type { AnnotationTask } from './types.js';

// Screen state is kept outside the DOM so switching label groups, or
// re-rendering after an error, can never lose a selection.

export interface ScreenState {
    task: AnnotationTask;
    activeGroup: number;
    selected: Set<number>;
    prechecked: Set<number>;
    comment: string;
    emptyConfirmed: boolean;
}

export function taskLabelIds(task: AnnotationTask): Set<number> {
    const ids = new Set<number>();
    for (const group of task.groups) {
        for (const entry of group) {
            ids.add(entry.class_id);
        }
    }
    return ids;
}

export function initState(task: AnnotationTask): ScreenState {
    const prechecked = new Set<number>();
    for (const group of task.groups) {
        for (const entry of group) {
            if (entry.prechecked) {
                prechecked.add(entry.class_id);
            }
        }
    }
    return {
        task,
        activeGroup: 0,
        selected: new Set(prechecked),
        prechecked,
        comment: '',
        emptyConfirmed: false,
    };
}

/** Toggle a checkbox. Ids not in the task payload are ignored: the UI
 *  never fabricates labels. Returns whether the id was valid. */
export function toggleLabel(state: ScreenState, classId: number): boolean {
    if (!taskLabelIds(state.task).has(classId)) {
        return false;
    }
    if (state.selected.has(classId)) {
        state.selected.delete(classId);
    } else {
        state.selected.add(classId);
    }
    state.emptyConfirmed = false;
    return true;
}

export function setActiveGroup(state: ScreenState, index: number): void {
    if (index >= 0 && index < state.task.groups.length) {
        state.activeGroup = index;
    }
}

export function selectionChanged(state: ScreenState): boolean {
    if (state.selected.size !== state.prechecked.size) {
        return true;
    }
    for (const id of state.selected) {
        if (!state.prechecked.has(id)) {
            return true;
        }
    }
    return false;
}

export type SubmitBlock = 'comment_required' | 'confirm_empty';

/** Client-side gate for submission; null means ready to send. */
export function submitBlocker(state: ScreenState): SubmitBlock | null {
    if (
        state.task.stage === 'refinement' &&
        selectionChanged(state) &&
        state.comment.trim() === ''
    ) {
        return 'comment_required';
    }
    if (state.selected.size === 0 && !state.emptyConfirmed) {
        return 'confirm_empty';
    }
    return null;
}

export function selectedLabels(state: ScreenState): number[] {
    return [...state.selected].sort((a, b) => a - b);
}

/** Keyboard shortcuts: digits 1-5 toggle within the active group,
 *  arrow keys move between groups. Returns true when handled. */
export function handleKey(state: ScreenState, key: string): boolean {
    if (key >= '1' && key <= '5') {
        const entry = state.task.groups[state.activeGroup]?.[Number(key) - 1];
        if (entry) {
            toggleLabel(state, entry.class_id);
            return true;
        }
        return false;
    }
    if (key === 'ArrowRight') {
        setActiveGroup(state, state.activeGroup + 1);
        return true;
    }
    if (key === 'ArrowLeft') {
        setActiveGroup(state, state.activeGroup - 1);
        return true;
    }
    return false;
}
