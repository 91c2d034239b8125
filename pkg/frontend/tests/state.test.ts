import { describe, expect, it } from "vitest";

import type { Tree } from "../src/api.js";
import {
  Store,
  flattenReferences,
  initialState,
  referencesOf,
  splitHighlight,
  statusIcon,
} from "../src/state.js";

describe("statusIcon", () => {
  it("shows the workshop icon while a decision is pending", () => {
    expect(statusIcon("pending")).toContain("⚙");
  });

  it("shows a check once decided", () => {
    expect(statusIcon("decided")).toBe("✅");
  });
});

describe("splitHighlight", () => {
  it("splits the source around the span", () => {
    const parts = splitHighlight("SELECT uid FROM person", [7, 10]);
    expect(parts.before).toBe("SELECT ");
    expect(parts.mark).toBe("uid");
    expect(parts.after).toBe(" FROM person");
  });

  it("reassembles to the original text", () => {
    const source = "WHERE uidperson = uid";
    const parts = splitHighlight(source, [18, 21]);
    expect(parts.before + parts.mark + parts.after).toBe(source);
  });
});

describe("Store", () => {
  it("notifies subscribers and merges patches", () => {
    const store = new Store();
    const seen: (string | null)[] = [];
    store.subscribe((s) => seen.push(s.sessionId));
    store.set({ sessionId: "abc" });
    store.set({ error: "boom" });
    expect(seen).toEqual(["abc", "abc"]);
    expect(store.get().sessionId).toBe("abc");
    expect(store.get().error).toBe("boom");
  });

  it("starts from the initial state", () => {
    expect(new Store().get()).toEqual(initialState);
  });
});

const tree: Tree = {
  session: "s",
  closed: false,
  pending: 1,
  roots: [
    {
      id: "op1",
      kind: "RenameColumn",
      label: "RenameColumn(person.uid -> login)",
      status: "pending",
      references: [
        {
          key: "k1",
          parent: "op1",
          subset: "view.select",
          status: "pending",
          chosen: null,
          candidates: [],
          reference: { owner: "o", span: [1, 2] },
        },
      ],
      children: [
        {
          id: "op2",
          kind: "DoNothing",
          label: "DoNothing",
          status: "decided",
          references: [
            {
              key: "k2",
              parent: "op2",
              subset: "constraints",
              status: "decided",
              chosen: "x",
              candidates: [],
              reference: { owner: "o2", span: [3, 4] },
            },
          ],
          children: [],
        },
      ],
    },
  ],
};

describe("tree helpers", () => {
  it("flattens references across the whole tree", () => {
    expect(flattenReferences(tree).map((r) => r.key)).toEqual(["k1", "k2"]);
  });

  it("filters references by operator", () => {
    expect(referencesOf(tree, "op2").map((r) => r.key)).toEqual(["k2"]);
    expect(referencesOf(tree, null).map((r) => r.key)).toEqual(["k1", "k2"]);
    expect(referencesOf(null, "op1")).toEqual([]);
  });
});
