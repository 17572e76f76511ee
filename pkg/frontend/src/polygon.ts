// Polygon editor state machine, kept free of DOM so it can be unit tested.
// Coordinates are in image pixels (x = column, y = row), fractional allowed.
//
// Drawing: each click appends a vertex; clicking within `closeRadius` of the
// first vertex (once there are at least 3) closes the outline. A closed
// polygon can be reshaped by dragging vertices. The component using this
// reads `vertices` and ships them to the server; no geometry beyond hit
// testing happens here.

export type Point = { x: number; y: number };

export type EditorPhase = "drawing" | "closed";

const DEFAULT_CLOSE_RADIUS = 6;

function dist(a: Point, b: Point): number {
  return Math.hypot(a.x - b.x, a.y - b.y);
}

export class PolygonEditor {
  private phase: EditorPhase = "drawing";
  private points: Point[] = [];
  private dragIndex: number | null = null;

  constructor(private readonly closeRadius: number = DEFAULT_CLOSE_RADIUS) {}

  get state(): EditorPhase {
    return this.phase;
  }

  get vertices(): [number, number][] {
    return this.points.map((p) => [p.x, p.y]);
  }

  get isClosed(): boolean {
    return this.phase === "closed";
  }

  reset(): void {
    this.phase = "drawing";
    this.points = [];
    this.dragIndex = null;
  }

  /**
   * Handle a click while drawing. Returns "added", "closed", or an error
   * string suitable for inline display.
   */
  click(p: Point): "added" | "closed" | string {
    if (this.phase === "closed") {
      return "outline already closed; drag a vertex or reset";
    }
    const first = this.points[0];
    if (first !== undefined && dist(p, first) <= this.closeRadius) {
      if (this.points.length < 3) {
        return "need at least 3 vertices before closing";
      }
      this.phase = "closed";
      return "closed";
    }
    const last = this.points[this.points.length - 1];
    if (last !== undefined && last.x === p.x && last.y === p.y) {
      return "vertex repeats the previous one";
    }
    this.points.push({ x: p.x, y: p.y });
    return "added";
  }

  /** Index of the vertex within `radius` of p, or null. Nearest wins. */
  hitVertex(p: Point, radius: number = this.closeRadius): number | null {
    let best: number | null = null;
    let bestDist = radius;
    for (let i = 0; i < this.points.length; i++) {
      const d = dist(p, this.points[i] as Point);
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    }
    return best;
  }

  beginDrag(p: Point): boolean {
    if (this.phase !== "closed") return false;
    this.dragIndex = this.hitVertex(p);
    return this.dragIndex !== null;
  }

  drag(p: Point): boolean {
    if (this.dragIndex === null) return false;
    this.points[this.dragIndex] = { x: p.x, y: p.y };
    return true;
  }

  endDrag(): void {
    this.dragIndex = null;
  }
}
