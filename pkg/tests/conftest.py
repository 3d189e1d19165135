"""Shared fixtures and synthesis helpers."""

import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from histoseq.regions import RegionMask

DEMO_CLASSES = ["Benign", "InSitu", "Invasive"]


def ellipse_mask(height, width, cy, cx, a, b, angle_deg):
    """Solid ellipse with semi-major axis a laid at angle_deg from the x-axis.

    Built in the image frame (y = row, increasing downward), matching the
    frame the orientation code works in.
    """
    yy, xx = np.mgrid[0:height, 0:width]
    t = math.radians(angle_deg)
    u = (xx - cx) * math.cos(t) + (yy - cy) * math.sin(t)
    v = -(xx - cx) * math.sin(t) + (yy - cy) * math.cos(t)
    return RegionMask(bits=(u / a) ** 2 + (v / b) ** 2 <= 1.0)


def square_xml(label="Benign", side=10):
    pts = [(0, 0), (side, 0), (side, side), (0, side)]
    coords = "".join(
        f'<Coordinate Order="{i}" X="{x}" Y="{y}"/>' for i, (x, y) in enumerate(pts)
    )
    return (
        '<?xml version="1.0"?><ASAP_Annotations><Annotations>'
        f'<Annotation Name="Annotation 0" Type="Polygon" PartOfGroup="{label}">'
        f"<Coordinates>{coords}</Coordinates></Annotation>"
        "</Annotations></ASAP_Annotations>"
    ).encode()


def ellipse_polygon(cx, cy, a, b, phi_deg, n=64):
    """Vertices around an ellipse boundary, axis a at phi_deg in the image frame."""
    phi = math.radians(phi_deg)
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    x = cx + a * np.cos(t) * np.cos(phi) - b * np.sin(t) * np.sin(phi)
    y = cy + a * np.cos(t) * np.sin(phi) + b * np.sin(t) * np.cos(phi)
    return np.stack([x, y], axis=1)


def make_demo_slide(root, classes=DEMO_CLASSES, per_class=4, seed=3):
    """Tiny synthetic slide: one colored ellipse per region plus annotations.

    Each class gets its own base color so even the toy block-statistics
    extractor separates them; poses and sizes vary per region. Returns
    (xml_path, image_path).
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    colors = [(200, 70, 70), (70, 200, 70), (70, 70, 200), (200, 200, 70)]
    count = len(classes) * per_class
    cols = 6
    rows = (count + cols - 1) // cols
    cell = 360
    slide = np.full((rows * cell, cols * cell, 3), 235, dtype=np.uint8)
    ann_root = ET.Element("ASAP_Annotations")
    anns = ET.SubElement(ann_root, "Annotations")
    k = 0
    for ci, cname in enumerate(classes):
        for _ in range(per_class):
            r, c = divmod(k, cols)
            cy, cx = r * cell + cell / 2, c * cell + cell / 2
            a = rng.uniform(55, 70)
            b = rng.uniform(120, 150)
            phi = rng.uniform(-80, 80)
            y0, y1 = int(cy) - 160, int(cy) + 160
            x0, x1 = int(cx) - 160, int(cx) + 160
            yy, xx = np.mgrid[y0:y1, x0:x1]
            u = (xx + 0.5 - cx) * math.cos(math.radians(phi)) + (yy + 0.5 - cy) * math.sin(
                math.radians(phi)
            )
            v = -(xx + 0.5 - cx) * math.sin(math.radians(phi)) + (yy + 0.5 - cy) * math.cos(
                math.radians(phi)
            )
            inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
            noise = rng.integers(-35, 36, size=(*inside.shape, 3))
            block = slide[y0:y1, x0:x1].astype(int)
            block[inside] = np.clip(np.array(colors[ci % len(colors)]) + noise[inside], 0, 255)
            slide[y0:y1, x0:x1] = block.astype(np.uint8)
            ann = ET.SubElement(
                anns, "Annotation", Name=f"Annotation {k}", Type="Polygon", PartOfGroup=cname
            )
            coords = ET.SubElement(ann, "Coordinates")
            for order, (x, y) in enumerate(ellipse_polygon(cx, cy, a, b, phi)):
                ET.SubElement(
                    coords, "Coordinate", Order=str(order), X=repr(float(x)), Y=repr(float(y))
                )
            k += 1
    root.mkdir(parents=True, exist_ok=True)
    Image.fromarray(slide).save(root / "slide.png")
    (root / "slide.xml").write_bytes(ET.tostring(ann_root))
    return root / "slide.xml", root / "slide.png"


DEMO_CONFIG = """
[pipeline]
classes = Benign, InSitu, Invasive
seed = 7

[model]
hidden_units = 8

[train]
optimizer = adam
learning_rate = 0.003
dropout_rate = 0.2
max_epochs = 6

[split]
ratios = 0.6, 0.2, 0.2
folds = 2
"""


@pytest.fixture(scope="session")
def demo_slide(tmp_path_factory):
    """(xml_path, image_path, config_path) for a 12-region demo slide."""
    root = tmp_path_factory.mktemp("demo_slide")
    xml_path, image_path = make_demo_slide(root)
    config_path = root / "config.ini"
    config_path.write_text(DEMO_CONFIG)
    return xml_path, image_path, config_path
