// Layered DAG layout for plan graphs: root at the top, each node one layer
// below its shallowest parent, siblings ordered by their first appearance
// in a depth-first walk from the root.

import type { PlanDoc } from "./types.js";

export interface NodePosition {
  id: number;
  x: number;
  y: number;
  layer: number;
}

export interface GraphLayout {
  positions: Map<number, NodePosition>;
  edges: Array<{ from: number; to: number }>;
  width: number;
  height: number;
}

export const CELL_W = 132;
export const CELL_H = 76;

export function layoutPlan(plan: PlanDoc): GraphLayout {
  const byId = new Map(plan.nodes.map((n) => [n.id, n]));

  // depth = length of the shortest path from the root
  const depth = new Map<number, number>();
  depth.set(plan.root, 0);
  const queue = [plan.root];
  while (queue.length > 0) {
    const id = queue.shift()!;
    for (const child of byId.get(id)!.children) {
      if (!depth.has(child)) {
        depth.set(child, depth.get(id)! + 1);
        queue.push(child);
      }
    }
  }

  // depth-first order fixes the horizontal arrangement inside each layer
  const dfsOrder: number[] = [];
  const seen = new Set<number>();
  const stack = [plan.root];
  while (stack.length > 0) {
    const id = stack.pop()!;
    if (seen.has(id)) continue;
    seen.add(id);
    dfsOrder.push(id);
    const children = byId.get(id)!.children;
    for (let i = children.length - 1; i >= 0; i--) stack.push(children[i]);
  }

  const layers = new Map<number, number[]>();
  for (const id of dfsOrder) {
    const layer = depth.get(id)!;
    if (!layers.has(layer)) layers.set(layer, []);
    layers.get(layer)!.push(id);
  }

  const layerCount = Math.max(...layers.keys()) + 1;
  const widest = Math.max(...[...layers.values()].map((ids) => ids.length));
  const width = widest * CELL_W + 40;
  const positions = new Map<number, NodePosition>();
  for (const [layer, ids] of layers) {
    const span = ids.length * CELL_W;
    const offset = (width - span) / 2;
    ids.forEach((id, i) => {
      positions.set(id, { id, x: offset + i * CELL_W + CELL_W / 2, y: 30 + layer * CELL_H, layer });
    });
  }

  const edges: Array<{ from: number; to: number }> = [];
  for (const node of plan.nodes) {
    for (const child of node.children) edges.push({ from: node.id, to: child });
  }
  return { positions, edges, width, height: layerCount * CELL_H + 50 };
}
