/** Minimal view layer: pure VNode trees, rendered to real DOM only in the
 * browser. Views stay testable in node without a DOM implementation. */

export type Child = VNode | string;

export interface VNode {
  tag: string;
  props: Record<string, unknown>;
  children: Child[];
}

export function h(tag: string, props: Record<string, unknown> = {},
                  ...children: (Child | Child[] | null | undefined)[]): VNode {
  const flat: Child[] = [];
  for (const child of children) {
    if (child == null) {
      continue;
    }
    if (Array.isArray(child)) {
      flat.push(...child.filter((c): c is Child => c != null));
    } else {
      flat.push(child);
    }
  }
  return { tag, props, children: flat };
}

/** Concatenated text content of a VNode tree (mirrors DOM textContent). */
export function textOf(node: Child): string {
  if (typeof node === "string") {
    return node;
  }
  return node.children.map(textOf).join("");
}

/** Depth-first search for the first node matching a predicate. */
export function findNode(node: Child,
                         match: (n: VNode) => boolean): VNode | null {
  if (typeof node === "string") {
    return null;
  }
  if (match(node)) {
    return node;
  }
  for (const child of node.children) {
    const hit = findNode(child, match);
    if (hit) {
      return hit;
    }
  }
  return null;
}

export function findAll(node: Child, match: (n: VNode) => boolean): VNode[] {
  const out: VNode[] = [];
  const visit = (n: Child) => {
    if (typeof n === "string") {
      return;
    }
    if (match(n)) {
      out.push(n);
    }
    n.children.forEach(visit);
  };
  visit(node);
  return out;
}

export function byClass(node: Child, cls: string): VNode | null {
  return findNode(node, (n) =>
    typeof n.props.class === "string" &&
    (n.props.class as string).split(" ").includes(cls));
}

/** Browser-only: materialize a VNode tree. */
export function toDom(node: Child, doc: Document): Node {
  if (typeof node === "string") {
    return doc.createTextNode(node);
  }
  const el = doc.createElement(node.tag);
  for (const [key, value] of Object.entries(node.props)) {
    if (value == null) {
      continue;
    }
    if (key.startsWith("on") && typeof value === "function") {
      el.addEventListener(key.slice(2), value as EventListener);
    } else if (key === "value" && "value" in el) {
      (el as HTMLInputElement).value = String(value);
    } else if (key === "checked" || key === "disabled" || key === "selected") {
      if (value) {
        el.setAttribute(key, "");
        (el as unknown as Record<string, unknown>)[key] = true;
      }
    } else {
      el.setAttribute(key, String(value));
    }
  }
  for (const child of node.children) {
    el.appendChild(toDom(child, doc));
  }
  return el;
}

export function mount(node: Child, container: Element): void {
  container.textContent = "";
  container.appendChild(toDom(node, container.ownerDocument));
}
