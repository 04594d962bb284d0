"""Minimal deterministic SVG writer for the report figures."""

from __future__ import annotations

from xml.sax.saxutils import escape


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e7 else f"{v:.4g}"
    return str(v)


class Canvas:
    def __init__(self, width: int, height: int, title: str = ""):
        self.width, self.height = width, height
        self.items: list[str] = []
        if title:
            self.items.append(f"<title>{escape(title)}</title>")

    def _attrs(self, kw) -> str:
        return " ".join(f'{k.rstrip("_").replace("_", "-")}="{escape(_fmt(v))}"' for k, v in kw.items())

    def rect(self, x, y, w, h, **kw):
        self.items.append(f"<rect {self._attrs(dict(x=x, y=y, width=w, height=h, **kw))}/>")

    def circle(self, cx, cy, r, **kw):
        self.items.append(f"<circle {self._attrs(dict(cx=cx, cy=cy, r=r, **kw))}/>")

    def line(self, x1, y1, x2, y2, **kw):
        self.items.append(f"<line {self._attrs(dict(x1=x1, y1=y1, x2=x2, y2=y2, **kw))}/>")

    def text(self, x, y, s: str, **kw):
        kw.setdefault("font_family", "sans-serif")
        kw.setdefault("font_size", 11)
        self.items.append(f"<text {self._attrs(dict(x=x, y=y, **kw))}>{escape(s)}</text>")

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, *self.items, "</svg>", ""])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())


def diverging(t: float) -> str:
    """Blue (t=0) through light grey to red (t=1)."""
    t = min(max(t, 0.0), 1.0)
    lo, mid, hi = (38, 84, 196), (221, 221, 221), (200, 40, 50)
    a, b, u = (lo, mid, t * 2) if t < 0.5 else (mid, hi, t * 2 - 1)
    return "#%02x%02x%02x" % tuple(round(x + (y - x) * u) for x, y in zip(a, b))
