"""
Generate Reference Meshes Script
Writes the generator meshes used by the manifests to data/meshes as JSON.

Usage:
    python scripts/generate_meshes.py

This will:
1. Build icospheres, tori and a cycle graph from the built-in generators
2. Print their cell counts and Betti numbers
3. Save each one as data/meshes/<name>.json
"""

import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from config import DATA_DIR
from services import cohomology, export, meshes

MESH_DIR = DATA_DIR / "meshes"

REFERENCE_MESHES = {
    "icosphere_s2": lambda: meshes.icosphere(2),
    "icosphere_s3": lambda: meshes.icosphere(3),
    "torus_24x12": lambda: meshes.torus_mesh(24, 12),
    "torus_48x24": lambda: meshes.torus_mesh(48, 24),
    "cycle_64": lambda: meshes.cycle_graph(64),
}


def main() -> int:
    MESH_DIR.mkdir(parents=True, exist_ok=True)
    print(f"📁 Writing meshes to {MESH_DIR}")

    for name, build in REFERENCE_MESHES.items():
        complex = build()
        betti = cohomology.betti_numbers(complex)
        path = export.save_mesh(complex, MESH_DIR / f"{name}.json")
        print(f"✅ {name}: counts={list(complex.counts)} betti={betti} -> {path.name}")

    print(f"\n🎉 Generated {len(REFERENCE_MESHES)} meshes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
