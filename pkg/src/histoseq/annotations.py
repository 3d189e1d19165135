"""Slide-annotation XML parsing into region records.

The expected layout is the ASAP style: an ``Annotations`` element
holding ``Annotation`` elements (one per region, class label in an
attribute), each with a ``Coordinates`` list of ``Coordinate`` elements
carrying ``X``, ``Y`` and ``Order`` attributes. Attribute and tag names
vary between annotation tools, so they are configurable through
``SchemaMapping``.

Regions that fail validation (too few vertices, non-finite or negative
coordinates) are reported, not silently dropped along with the rest of
the file; regions with labels outside the configured class set are kept
but flagged.
"""

from __future__ import annotations

import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Collection, Dict, List, NamedTuple, Optional, Tuple

from .errors import DataError


@dataclass(frozen=True)
class SchemaMapping:
    annotation_tag: str = "Annotation"
    coordinate_tag: str = "Coordinate"
    label_attr: str = "PartOfGroup"
    name_attr: str = "Name"
    x_attr: str = "X"
    y_attr: str = "Y"
    order_attr: str = "Order"
    coordinate_scale: float = 1.0


DEFAULT_SCHEMA = SchemaMapping()


@dataclass
class RegionRecord:
    region_id: int
    label: str
    coordinates: List[Tuple[float, float]]
    area_px: float
    metadata: Dict[str, str] = field(default_factory=dict)
    label_known: bool = True


class BoundingBox(NamedTuple):
    min_x: int
    min_y: int
    max_x: int
    max_y: int

    @property
    def width(self) -> int:
        return self.max_x - self.min_x

    @property
    def height(self) -> int:
        return self.max_y - self.min_y


@dataclass
class ParseReport:
    records: List[RegionRecord]
    errors: List[str]


def polygon_area(coordinates: List[Tuple[float, float]]) -> float:
    """Shoelace area of a closed polygon (vertices given once, unclosed)."""
    total = 0.0
    n = len(coordinates)
    for i in range(n):
        x1, y1 = coordinates[i]
        x2, y2 = coordinates[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0


def _byte_offset(xml_bytes: bytes, line: int, column: int) -> int:
    lines = xml_bytes.split(b"\n")
    return sum(len(ln) + 1 for ln in lines[: line - 1]) + column


def _region_name(element: ET.Element, schema: SchemaMapping, index: int) -> Tuple[str, int]:
    name = element.get(schema.name_attr, f"region {index}")
    match = re.search(r"(\d+)\s*$", name)
    return name, int(match.group(1)) if match else index


def parse_annotations(
    xml_bytes: bytes,
    schema: SchemaMapping = DEFAULT_SCHEMA,
    known_labels: Optional[Collection[str]] = None,
) -> ParseReport:
    """Parse annotation XML into region records plus per-region errors."""
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        line, column = exc.position
        offset = _byte_offset(xml_bytes, line, column)
        raise DataError(
            f"malformed annotation XML at byte offset {offset} (line {line}, column {column}): {exc}"
        ) from exc

    records: List[RegionRecord] = []
    errors: List[str] = []
    for index, element in enumerate(root.iter(schema.annotation_tag)):
        name, region_id = _region_name(element, schema, index)
        label = element.get(schema.label_attr, "")
        coords: List[Tuple[float, float, float]] = []
        bad: Optional[str] = None
        for pos, coord in enumerate(element.iter(schema.coordinate_tag)):
            try:
                x = float(coord.get(schema.x_attr)) * schema.coordinate_scale
                y = float(coord.get(schema.y_attr)) * schema.coordinate_scale
            except (TypeError, ValueError):
                bad = f"{name}: coordinate {pos} missing or non-numeric {schema.x_attr}/{schema.y_attr}"
                break
            if not (math.isfinite(x) and math.isfinite(y)):
                bad = f"{name}: coordinate {pos} is not finite"
                break
            if x < 0 or y < 0:
                bad = f"{name}: coordinate {pos} is negative ({x}, {y})"
                break
            order = coord.get(schema.order_attr)
            coords.append((float(order) if order is not None else float(pos), x, y))
        if bad is not None:
            errors.append(bad)
            continue
        if len(coords) < 3:
            errors.append(f"{name}: polygon needs >= 3 vertices, got {len(coords)}")
            continue
        coords.sort(key=lambda item: item[0])
        vertices = [(x, y) for _, x, y in coords]
        metadata = {k: v for k, v in element.attrib.items() if k != schema.label_attr}
        records.append(
            RegionRecord(
                region_id=region_id,
                label=label,
                coordinates=vertices,
                area_px=polygon_area(vertices),
                metadata=metadata,
                label_known=known_labels is None or label in set(known_labels),
            )
        )
    return ParseReport(records=records, errors=errors)


def records_to_xml(records: List[RegionRecord], schema: SchemaMapping = DEFAULT_SCHEMA) -> bytes:
    """Serialize records back to the annotation layout ``parse_annotations`` reads."""
    root = ET.Element("ASAP_Annotations")
    annotations = ET.SubElement(root, "Annotations")
    for record in records:
        attrs = dict(record.metadata)
        attrs.setdefault(schema.name_attr, f"Region {record.region_id}")
        attrs[schema.label_attr] = record.label
        element = ET.SubElement(annotations, schema.annotation_tag, attrs)
        coordinates = ET.SubElement(element, "Coordinates")
        for pos, (x, y) in enumerate(record.coordinates):
            ET.SubElement(
                coordinates,
                schema.coordinate_tag,
                {
                    schema.order_attr: str(pos),
                    schema.x_attr: repr(x / schema.coordinate_scale),
                    schema.y_attr: repr(y / schema.coordinate_scale),
                },
            )
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def region_bounding_box(record: RegionRecord) -> BoundingBox:
    """Tight integer axis-aligned hull of the region's vertices.

    Minima are floored and maxima ceiled so the box always encloses the
    polygon even for fractional coordinates.
    """
    xs = [x for x, _ in record.coordinates]
    ys = [y for _, y in record.coordinates]
    return BoundingBox(
        min_x=math.floor(min(xs)),
        min_y=math.floor(min(ys)),
        max_x=math.ceil(max(xs)),
        max_y=math.ceil(max(ys)),
    )
