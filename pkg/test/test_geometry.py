import unittest

import numpy as np

from src import errors, geometry
from src.geometry import PatchGeometry
from src.tensor import Tensor

from . import common


class GeometryTest(common.PatchmixTest):
    def test_round_trip(self) -> None:
        images = common.random_images(2, size=8)
        for patch_size in (1, 2, 4, 8):
            geo = PatchGeometry(3, 8, 8, patch_size)
            patches = geometry.patchify(Tensor(images), patch_size)
            self.assertEqual(patches.shape, (2, *geo.patch_shape))
            restored = geometry.unpatchify(patches, geo).numpy()
            self.assertTrue(np.array_equal(restored, images))

    def test_patches_are_row_major(self) -> None:
        image = np.arange(3 * 4 * 6, dtype=np.float64).reshape(3, 4, 6)
        patches = geometry.patchify(Tensor(image), 2).numpy()
        self.assertEqual(patches.shape, (6, 3, 2, 2))
        self.assertTrue(np.array_equal(patches[0], image[:, 0:2, 0:2]))
        self.assertTrue(np.array_equal(patches[1], image[:, 0:2, 2:4]))
        self.assertTrue(np.array_equal(patches[3], image[:, 2:4, 0:2]))

    def test_swapped_patches_swap_pixel_blocks(self) -> None:
        image = common.random_images(1, seed=4, size=8)[0]
        geo = PatchGeometry(3, 8, 8, 2)
        patches = geometry.patchify(Tensor(image), 2).numpy().copy()
        patches[[1, 10]] = patches[[10, 1]]
        swapped = geometry.unpatchify(Tensor(patches), geo).numpy()

        # patch 1 covers rows 0:2, cols 2:4; patch 10 covers rows 4:6, cols 4:6
        expected = image.copy()
        expected[:, 0:2, 2:4] = image[:, 4:6, 4:6]
        expected[:, 4:6, 4:6] = image[:, 0:2, 2:4]
        self.assertTrue(np.array_equal(swapped, expected))

        changed = swapped != image
        untouched = np.ones((8, 8), dtype=bool)
        untouched[0:2, 2:4] = untouched[4:6, 4:6] = False
        self.assertFalse(changed[:, untouched].any())

    def test_rectangular_round_trip(self) -> None:
        image = np.random.default_rng(1).normal(size=(3, 4, 12))
        geo = PatchGeometry(3, 4, 12, 4)
        self.assertEqual(geo.grid, (1, 3))
        restored = geometry.unpatchify(geometry.patchify(Tensor(image), 4), geo)
        self.assertTrue(np.array_equal(restored.numpy(), image))

    def test_indivisible_image(self) -> None:
        with self.assertRaises(errors.GeometryError):
            geometry.patchify(Tensor(np.zeros((3, 6, 6))), 4)
        with self.assertRaises(errors.GeometryError):
            PatchGeometry(3, 0, 8, 4)

    def test_mismatched_patches(self) -> None:
        with self.assertRaises(errors.GeometryError):
            geometry.unpatchify(Tensor(np.zeros((4, 3, 2, 2))), PatchGeometry(3, 8, 8, 4))
        with self.assertRaises(errors.GeometryError):
            geometry.patchify(Tensor(np.zeros((8, 8))), 4)


if __name__ == "__main__":
    unittest.main()
