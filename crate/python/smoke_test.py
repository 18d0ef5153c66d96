#!/usr/bin/env python3
"""Builds the snkit extension module and exercises its surface end to end.

Usage: python3 python/smoke_test.py [--skip-build]
"""

import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build_extension(skip_build: bool) -> pathlib.Path:
    if not skip_build:
        subprocess.run(
            ["cargo", "build", "--release", "-p", "snkit-python"],
            cwd=ROOT,
            check=True,
        )
    release = ROOT / "target" / "release"
    for name in ("libsnkit.so", "libsnkit.dylib", "snkit.dll"):
        candidate = release / name
        if candidate.exists():
            return candidate
    sys.exit(f"no built extension found under {release}")


def import_snkit(lib: pathlib.Path):
    stage = pathlib.Path(tempfile.mkdtemp(prefix="snkit-py-"))
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy2(lib, stage / f"snkit{suffix}")
    sys.path.insert(0, str(stage))
    import snkit  # noqa: E402

    return snkit


def main() -> None:
    skip_build = "--skip-build" in sys.argv[1:]
    snkit = import_snkit(build_extension(skip_build))

    # Shuffle permutation: reshape (g, n), transpose, flatten.
    assert snkit.channel_shuffle_perm(4, 2) == [0, 2, 1, 3]
    assert snkit.channel_shuffle_perm(6, 3) == [0, 2, 4, 1, 3, 5]
    print("ok channel_shuffle_perm")

    # Tensor ops: shuffle twice with complementary groups is the identity.
    x = snkit.Tensor.random(1, 12, 4, 4, seed=7)
    back = x.channel_shuffle(3).channel_shuffle(4)
    assert back.tolist() == x.tolist()
    a = x.slice_channels(0, 5)
    b = x.slice_channels(5, 12)
    assert a.concat_channels(b).tolist() == x.tolist()
    print("ok tensor shuffle/slice/concat")

    # Closed-form unit cost.
    assert snkit.unit_flops("shufflenet", 240, 28, 28, 60, 3) == 7_949_760
    assert snkit.unit_flops("resnet", 240, 28, 28, 60, 1) == 47_980_800
    assert snkit.unit_flops_stride2(24, 240, 56, 56, 60, 3, False) == 8_326_080
    print("ok unit_flops")

    # Connectivity: stacked grouped layers are block-diagonal until shuffled.
    plain = snkit.connectivity(8, 2, with_shuffle=False)
    assert not all(all(row) for row in plain)
    assert plain[0][0] and not plain[0][7]
    shuffled = snkit.connectivity(8, 2, with_shuffle=True)
    assert all(all(row) for row in shuffled)
    print("ok connectivity")

    # Whole-network build, static cost, forward pass, save/load.
    net = snkit.Network.shufflenet(groups=3, scale=1.0, seed=42)
    total = net.flops(224, 224)
    assert abs(total - 137e6) / 137e6 < 0.02, total
    assert net.stage_widths() == [240, 480, 960]
    assert net.weighted_layer_count() == 50

    y = net.forward(snkit.Tensor.random(1, 3, 64, 64, seed=1))
    assert y.shape == (1, 1000, 1, 1)

    with tempfile.TemporaryDirectory() as td:
        path = str(pathlib.Path(td) / "model.bin")
        net.save(path)
        restored = snkit.Network.load(path)
        assert restored.flops(224, 224) == total
        y2 = restored.forward(snkit.Tensor.random(1, 3, 64, 64, seed=1))
        assert y2.tolist() == y.tolist()
    print("ok network build/forward/save/load, 224x224 mult-adds =", total)

    # Budget-matched comparison structure.
    resnet, rel_err = snkit.Network.comparison("resnet", net)
    assert rel_err < 0.1
    assert resnet.stage_widths()[-1] < net.stage_widths()[-1]
    print("ok comparison builder:", resnet.name, "rel_err", round(rel_err, 4))

    print("smoke test passed")


if __name__ == "__main__":
    main()
