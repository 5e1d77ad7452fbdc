"""Product corpora: record types, JSONL ingestion, validation and a synthetic generator."""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

MAX_ITEMS = 50

CATEGORIES: tuple[str, ...] = (
    "Home & Kitchen",
    "Tools & Home Improvement",
    "Electronics",
    "Sports & Outdoors",
    "Health & Household",
    "Beauty & Personal Care",
    "Automotive",
    "Toys & Games",
    "Clothing, Shoes & Jewelry",
    "Pet Supplies",
    "Grocery & Gourmet Food",
    "Office Products",
    "Computer & Accessories",
    "Luggage & Travel Gear",
    "Industrial & Scientific",
)


class CorpusError(ValueError):
    """Raised for unreadable or malformed corpus files."""


@dataclass(frozen=True)
class Image:
    url: str
    width: int
    height: int


@dataclass(frozen=True)
class ProductRecord:
    name: str
    price: str = ""
    short_description: str = ""
    images: tuple[Image, ...] = ()
    rating: str = ""
    num_reviews: str = ""
    long_description: str = ""
    review_link: str = ""
    # Provenance of optimization content appended to long_description, oldest first.
    appended: tuple[str, ...] = ()

    @property
    def text(self) -> str:
        """Item text used by content scorers: name, short and long description."""
        return " ".join((self.name, self.short_description, self.long_description))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "price": self.price,
            "short_description": self.short_description,
            "images": [
                {"url": im.url, "width": im.width, "height": im.height} for im in self.images
            ],
            "rating": self.rating,
            "num_reviews": self.num_reviews,
            "long_description": self.long_description,
            "review_link": self.review_link,
        }
        if self.appended:
            out["appended_content"] = list(self.appended)
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ProductRecord:
        images = tuple(
            Image(url=str(im.get("url", "")), width=int(im.get("width", 0)),
                  height=int(im.get("height", 0)))
            for im in d.get("images") or ()
        )
        return cls(
            name=_text_field(d, "name"),
            price=_text_field(d, "price"),
            short_description=_text_field(d, "short_description"),
            images=images,
            rating=_text_field(d, "rating"),
            num_reviews=_text_field(d, "num_reviews"),
            long_description=_text_field(d, "long_description"),
            review_link=_text_field(d, "review_link"),
            appended=tuple(str(x) for x in d.get("appended_content") or ()),
        )


def _text_field(d: dict[str, Any], key: str) -> str:
    value = d.get(key)
    return "" if value is None else str(value)


@dataclass(frozen=True)
class Query:
    text: str
    category: str = ""

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("query text must be nonempty")


@dataclass(frozen=True)
class CandidateSet:
    query: Query
    items: tuple[ProductRecord, ...]
    target_index: int = field(default=-1)

    def __post_init__(self) -> None:
        if not 1 <= len(self.items) <= MAX_ITEMS:
            raise ValueError(f"candidate set needs 1..{MAX_ITEMS} items, got {len(self.items)}")
        if self.target_index == -1:
            object.__setattr__(self, "target_index", len(self.items) - 1)
        if not 0 <= self.target_index < len(self.items):
            raise ValueError(f"target_index {self.target_index} out of range")

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def target(self) -> ProductRecord:
        return self.items[self.target_index]

    def with_item(self, index: int, record: ProductRecord) -> CandidateSet:
        items = list(self.items)
        items[index] = record
        return replace(self, items=tuple(items))

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query.text,
            "category": self.query.category,
            "items": [r.to_dict() for r in self.items],
            "target_index": self.target_index,
        }


@dataclass(frozen=True)
class Validation:
    accepted: bool
    reason: str = ""


def validate_record(r: ProductRecord) -> Validation:
    """Accept a record iff it has a name and at least one description."""
    if not r.name.strip():
        return Validation(False, "empty name")
    if not (r.short_description.strip() or r.long_description.strip()):
        return Validation(False, "empty short and long description")
    return Validation(True)


def select_target(c: CandidateSet, index: int | None = None) -> CandidateSet:
    """Designate the promotion target; the last retrieved item unless overridden."""
    if not c.items:
        raise ValueError("empty candidate set")
    if index is None:
        index = len(c.items) - 1
    if not 0 <= index < len(c.items):
        raise ValueError(f"target index {index} out of range for {len(c.items)} items")
    return replace(c, target_index=index)


def parse_candidate_set(obj: dict[str, Any]) -> tuple[CandidateSet | None, list[str]]:
    """Build a candidate set from one decoded JSONL object.

    Returns ``(set, rejection_reasons)``; the set is ``None`` when validation
    removed every item.  Raises ``CorpusError`` on structural problems.
    """
    if not isinstance(obj, dict):
        raise CorpusError("line is not a JSON object")
    query_text = obj.get("query")
    if not isinstance(query_text, str) or not query_text.strip():
        raise CorpusError("missing or empty 'query'")
    raw_items = obj.get("items")
    if not isinstance(raw_items, list):
        raise CorpusError("'items' must be an array")
    raw_target = obj.get("target_index")

    kept: list[ProductRecord] = []
    reasons: list[str] = []
    new_target: int | None = None
    for i, raw in enumerate(raw_items):
        if not isinstance(raw, dict):
            raise CorpusError(f"item {i} is not an object")
        rec = ProductRecord.from_dict(raw)
        verdict = validate_record(rec)
        if not verdict.accepted:
            reasons.append(f"item {i}: {verdict.reason}")
            continue
        if raw_target is not None and i == raw_target:
            new_target = len(kept)
        kept.append(rec)

    if not kept:
        return None, reasons
    if len(kept) > MAX_ITEMS:
        raise CorpusError(f"{len(kept)} items exceeds cap of {MAX_ITEMS}")
    if raw_target is not None and new_target is None:
        raise CorpusError(f"target_index {raw_target} is invalid or was rejected")
    query = Query(query_text, str(obj.get("category") or ""))
    c = CandidateSet(query, tuple(kept), len(kept) - 1 if new_target is None else new_target)
    return c, reasons


def load_corpus(path: str | Path) -> list[CandidateSet]:
    """Read a JSONL corpus, keeping only records that pass validation."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    out: list[CandidateSet] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            c, _ = parse_candidate_set(obj)
        except (json.JSONDecodeError, CorpusError, ValueError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        if c is None:
            raise CorpusError(f"{path}:{lineno}: every item was rejected by validation")
        out.append(c)
    return out


def dump_corpus(sets: Iterable[CandidateSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in sets:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def parse_price(price: str) -> float | None:
    """Best-effort numeric price from a display string such as ``"$319.95"``."""
    m = re.search(r"\d[\d,]*(?:\.\d+)?", price)
    return float(m.group().replace(",", "")) if m else None


def parse_rating(rating: str) -> float | None:
    m = re.search(r"\d+(?:\.\d+)?", rating)
    return float(m.group()) if m else None


# ---------------------------------------------------------------------------
# Synthetic corpus
#
# Query tokens split into "selective" tokens (a qualifier plus one or two
# features) and product words.  Every item names the product; the selective
# tokens each get one dedicated sentence, and the number an item carries is
# non-increasing with retrieval position.  The target (last item) carries none.
# Filler and customer-note sentences share no tokens with any selective word.

_QUALIFIERS = ("best", "affordable", "premium", "reliable", "budget", "popular")

_CATALOG: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "Home & Kitchen": (
        ("air fryer", "blender", "coffee maker", "rice cooker", "stand mixer"),
        ("compact", "quiet", "digital", "stainless", "programmable", "nonstick"),
    ),
    "Tools & Home Improvement": (
        ("heat gun", "impact wrench", "cordless drill", "circular saw", "stud finder"),
        ("brushless", "variable", "heavy", "ergonomic", "compact", "powerful"),
    ),
    "Electronics": (
        ("wireless earbuds", "bluetooth speaker", "portable charger", "smart watch", "tablet"),
        ("waterproof", "rechargeable", "slim", "loud", "fast", "durable"),
    ),
    "Sports & Outdoors": (
        ("camping tent", "hiking backpack", "yoga mat", "water bottle", "trekking poles"),
        ("lightweight", "waterproof", "insulated", "foldable", "breathable", "padded"),
    ),
    "Health & Household": (
        ("electric toothbrush", "air purifier", "humidifier", "massage gun", "vitamin gummies"),
        ("gentle", "quiet", "cordless", "hypoallergenic", "unscented", "rechargeable"),
    ),
    "Beauty & Personal Care": (
        ("hair dryer", "face serum", "moisturizer", "curling iron", "sunscreen"),
        ("ionic", "hydrating", "ceramic", "lightweight", "vegan", "gentle"),
    ),
    "Automotive": (
        ("dash cam", "jump starter", "tire inflator", "car vacuum", "seat covers"),
        ("portable", "cordless", "waterproof", "digital", "heavy", "universal"),
    ),
    "Toys & Games": (
        ("building blocks", "board game", "jigsaw puzzle", "remote control car", "plush toy"),
        ("educational", "colorful", "wooden", "rechargeable", "soft", "magnetic"),
    ),
    "Clothing, Shoes & Jewelry": (
        ("running shoes", "rain jacket", "wool socks", "leather belt", "silver necklace"),
        ("breathable", "waterproof", "cushioned", "slim", "warm", "adjustable"),
    ),
    "Pet Supplies": (
        ("dog bed", "cat litter", "dog harness", "pet fountain", "cat tree"),
        ("orthopedic", "washable", "adjustable", "quiet", "clumping", "sturdy"),
    ),
    "Grocery & Gourmet Food": (
        ("green tea", "coffee beans", "protein bars", "olive oil", "dark chocolate"),
        ("organic", "roasted", "decaf", "unsweetened", "bulk", "fresh"),
    ),
    "Office Products": (
        ("desk organizer", "office chair", "label maker", "paper shredder", "whiteboard"),
        ("adjustable", "quiet", "magnetic", "bamboo", "wireless", "large"),
    ),
    "Computer & Accessories": (
        ("mechanical keyboard", "wireless mouse", "usb hub", "monitor stand", "laptop sleeve"),
        ("backlit", "ergonomic", "aluminum", "portable", "silent", "slim"),
    ),
    "Luggage & Travel Gear": (
        ("carry on suitcase", "travel pillow", "packing cubes", "duffel bag", "passport wallet"),
        ("spinner", "lightweight", "compressible", "waterproof", "expandable", "slim"),
    ),
    "Industrial & Scientific": (
        ("digital caliper", "safety glasses", "lab thermometer", "nitrile gloves", "multimeter"),
        ("precise", "disposable", "rugged", "calibrated", "antifog", "durable"),
    ),
}

_BRANDS = (
    "Vornado", "Kestrel", "Ardent", "Lumina", "Northway", "Pellio", "Corvax",
    "Tidewell", "Brisa", "Ostra", "Halden", "Marlo", "Quillon", "Sabre", "Yarrow",
)

_SELECTIVE_SENTENCE = "Known for a {tok} design that suits everyday use."

_FILLER = (
    "Ships in a retail box with a printed manual.",
    "Backed by a one year limited warranty.",
    "Assembly takes only a few minutes with the included parts.",
    "The finish resists fingerprints and wipes clean.",
    "Comes in several colors to match your space.",
    "Customer support is available by phone and email.",
    "Dimensions and weight are listed on the package.",
    "The controls are simple and easy to reach.",
    "Replacement parts are sold separately by the maker.",
    "The package includes a cleaning cloth and a storage pouch.",
    "Made from materials chosen to last through daily use.",
    "A clear display shows the current mode at a glance.",
)

CUSTOMER_NOTES = (
    "After buying this {product}, I used it every day and it worked well.",
    "It was easy to set up and the build felt solid.",
    "My family liked it from day one.",
    "I would buy it again for the price.",
    "It arrived on time and was packed with care.",
    "After a month of use it still works like new.",
    "I gave one to a friend and she loved it too.",
    "The size was just right for our home.",
)


def _price(rng: random.Random) -> str:
    return f"${rng.randint(12, 420)}.{rng.choice(('99', '95', '49', '00'))}"


def _make_item(
    rng: random.Random, product: str, selective: list[str], asin_counter: int
) -> ProductRecord:
    brand = rng.choice(_BRANDS)
    model = f"{brand[:2].upper()}{rng.randint(100, 999)}"
    name = f"{brand} {model} {product.title()}"
    short_parts = [_SELECTIVE_SENTENCE.format(tok=tok) for tok in selective]
    short_parts += rng.sample(_FILLER, 2)
    rng.shuffle(short_parts)
    long_parts = rng.sample(_FILLER, 2)
    long_parts += [s.format(product=product) for s in rng.sample(CUSTOMER_NOTES, 2)]
    asin = f"B0{asin_counter:08d}"
    n_images = rng.randint(0, 3)
    images = tuple(
        Image(f"https://images.example.com/{asin}_{j}.jpg", w, w)
        for j, w in enumerate(rng.sample((355, 425, 450, 466, 522, 569, 679), n_images))
    )
    stars = rng.choice(("3.8", "4.0", "4.2", "4.3", "4.5", "4.6", "4.7", "4.8"))
    return ProductRecord(
        name=name,
        price=_price(rng),
        short_description=" ".join(short_parts),
        images=images,
        rating=f"{stars} out of 5 stars",
        num_reviews=f"{rng.randint(12, 25000):,} ratings",
        long_description=" ".join(long_parts),
        review_link=f"/product-reviews/{asin}/ref=cm_cr_dp_d_show_all_btm?ie=UTF8&reviewerType=all_reviews",
    )


def synth_candidate_set(rng: random.Random, n_items: int, serial: int = 0) -> CandidateSet:
    category = rng.choice(CATEGORIES)
    products, features = _CATALOG[category]
    product = rng.choice(products)
    selective = [rng.choice(_QUALIFIERS)] + rng.sample(features, rng.choice((1, 2)))
    query = Query(" ".join(selective + [product]), category)

    items = []
    for k in range(n_items):
        if k == n_items - 1:
            m = 0
        else:
            m = math.ceil(len(selective) * (n_items - 1 - k) / (n_items - 1))
        chosen = rng.sample(selective, m)
        items.append(_make_item(rng, product, chosen, serial * MAX_ITEMS + k))
    return CandidateSet(query, tuple(items), n_items - 1)


def synth_corpus(seed: int, n_sets: int, n_items: int) -> list[CandidateSet]:
    """Deterministic desk-scale corpus with controlled query overlap."""
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    if n_items > MAX_ITEMS:
        raise ValueError(f"n_items must be <= {MAX_ITEMS}")
    rng = random.Random(seed)
    return [synth_candidate_set(rng, n_items, serial=i) for i in range(n_sets)]


def selective_vocabulary() -> frozenset[str]:
    """Every qualifier and feature word the generator may place in a query."""
    words = set(_QUALIFIERS)
    for _, feats in _CATALOG.values():
        words.update(feats)
    return frozenset(words)


def filler_sentences() -> tuple[str, ...]:
    return _FILLER + (_SELECTIVE_SENTENCE,)
