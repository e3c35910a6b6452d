/** Keyboard bindings: digits 1..5 choose the suggestion at that rank for
 * the selected hotspot, Enter confirms, x rejects, Delete removes. */

import type { EditKind, Hotspot } from "./types.js";

export interface KeyAction {
  kind: EditKind;
  target: string;
  payload: Record<string, unknown>;
}

export function actionForKey(key: string, selected: Hotspot | null): KeyAction | null {
  if (!selected) return null;
  if (key >= "1" && key <= "5") {
    const rank = Number(key);
    if (rank > selected.suggestions.length) return null;
    const [classId] = selected.suggestions[rank - 1];
    return { kind: "choose_class", target: selected.hotspot_id, payload: { class_id: classId } };
  }
  switch (key) {
    case "Enter":
    case "c":
      if (selected.chosen_class === null && selected.suggestions.length === 0) return null;
      return { kind: "confirm", target: selected.hotspot_id, payload: {} };
    case "x":
      return { kind: "reject", target: selected.hotspot_id, payload: {} };
    case "Delete":
    case "Backspace":
      return { kind: "delete", target: selected.hotspot_id, payload: {} };
    default:
      return null;
  }
}
