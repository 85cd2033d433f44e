"""Turn metapath subgraphs into prompt text and ranker input tokens."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .kg import FORWARD, MetapathSubgraph

FULL = "full"
TYPED_ARROWS = "typed_arrows"
PLAIN_ARROWS = "plain_arrows"
HYPHEN = "hyphen"
_VARIANTS = (FULL, TYPED_ARROWS, PLAIN_ARROWS, HYPHEN)

DEFAULT_ARROW = "→"
DEFAULT_PREFIX = "Relation paths between the pair: "

CLS = "CLS"
SEP = "SEP"
_MARKERS = frozenset((CLS, SEP))

# Mirror tokens let reverse-crossed edges point the other way; unknown
# arrow tokens fall back to themselves (direction dropped).
_MIRRORS = {"→": "←", "->": "<-", "=>": "<=", ">": "<"}


@dataclass(frozen=True)
class VerbalizationStyle:
    """How a subgraph is rendered: which variant, arrow token, and prefix.

    The prefix only appears in the ``full`` variant; the simplified variants
    render the bare path.
    """

    variant: str = PLAIN_ARROWS
    arrow_token: str = DEFAULT_ARROW
    prefix: Optional[str] = DEFAULT_PREFIX

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown verbalization variant {self.variant!r}")
        if self.variant in (TYPED_ARROWS, PLAIN_ARROWS) and not self.arrow_token:
            raise ValueError("arrow_token must be non-empty for arrow variants")


FULL_STYLE = VerbalizationStyle(variant=FULL)
TYPED_ARROWS_STYLE = VerbalizationStyle(variant=TYPED_ARROWS)
PLAIN_ARROWS_STYLE = VerbalizationStyle(variant=PLAIN_ARROWS)
HYPHEN_STYLE = VerbalizationStyle(variant=HYPHEN)


def _typed_name(node_type: str, name: str) -> str:
    return f"{node_type} {name}" if node_type else name


def verbalize(subgraph: MetapathSubgraph, style: VerbalizationStyle = PLAIN_ARROWS_STYLE) -> str:
    """Render a subgraph as natural-language path text.

    ``full`` lists every hop as an oriented triple "(type name, label,
    type name)" behind the prefix; ``typed_arrows`` chains typed names with
    labeled arrows; ``plain_arrows`` chains the bare names with arrows;
    ``hyphen`` joins the names with " - " and drops direction.
    """
    names = subgraph.node_names
    types = subgraph.node_types
    labels = subgraph.edge_labels
    directions = subgraph.edge_directions
    arrow = style.arrow_token
    mirror = _MIRRORS.get(arrow, arrow)

    if style.variant == HYPHEN:
        return " - ".join(names)

    if style.variant == PLAIN_ARROWS:
        parts = [names[0]]
        for i in range(len(labels)):
            parts.append(f" {arrow if directions[i] == FORWARD else mirror} ")
            parts.append(names[i + 1])
        return "".join(parts)

    if style.variant == TYPED_ARROWS:
        parts = [_typed_name(types[0], names[0])]
        for i in range(len(labels)):
            tok = arrow if directions[i] == FORWARD else mirror
            parts.append(f" {tok}{labels[i]}{tok} ")
            parts.append(_typed_name(types[i + 1], names[i + 1]))
        return "".join(parts)

    # full: one oriented triple per hop, in the edge's stored orientation.
    triples = []
    for i in range(len(labels)):
        left = _typed_name(types[i], names[i])
        right = _typed_name(types[i + 1], names[i + 1])
        if directions[i] != FORWARD:
            left, right = right, left
        triples.append(f"({left}, {labels[i]}, {right})")
    body = ", ".join(triples)
    return f"{style.prefix}{body}" if style.prefix else body


def encode_ranker_input(pair: tuple[str, str], subgraph: MetapathSubgraph,
                        include_types: bool = True) -> list[str]:
    """Token sequence fed to ranking models.

    Layout: CLS marker, the pair's name tokens, SEP marker, then one
    "type name" segment per node with a "-" token between segments.  When a
    node has no type and types were requested, the adjacent edge label fills
    the type slot.
    """
    a, b = pair
    tokens = [CLS, *a.split(), *b.split(), SEP]
    n = len(subgraph.node_names)
    for i, name in enumerate(subgraph.node_names):
        if i > 0:
            tokens.append("-")
        if include_types:
            meta = subgraph.node_types[i]
            if not meta:
                meta = subgraph.edge_labels[min(i, n - 2)]
            tokens.extend(meta.split())
        tokens.extend(name.split())
    return tokens


def tokenize(text_or_tokens: Union[str, Iterable[str]]) -> list[str]:
    """Whitespace tokens, lowercased except for the CLS/SEP markers."""
    if isinstance(text_or_tokens, str):
        raw = text_or_tokens.split()
    else:
        raw = [t for tok in text_or_tokens for t in str(tok).split()]
    return [t if t in _MARKERS else t.lower() for t in raw]
