# Copyright 2026 The mimicinv Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reference values for gaussian_blur, gray_blur and percentile tests.

Run with OpenCV and numpy installed; the printed numbers are pasted into
tests/test_corruptions.cpp.
"""

import cv2
import numpy as np


def fixture(h, w):
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.sin(0.37 * i + 0.91 * j) * np.cos(0.23 * i - 0.05 * j * j)


def main():
    x = fixture(14, 14).astype(np.float64)
    for k in (11, 15, 25):
        y = cv2.GaussianBlur(x, (k, k), 0, borderType=cv2.BORDER_REFLECT_101)
        for (r, c) in ((0, 0), (3, 7), (13, 13), (6, 0)):
            print(f"blur k={k} ({r},{c}) = {y[r, c]!r}")
        print(f"blur k={k} sum = {y.sum()!r}")

    for k in (11, 25):
        g = cv2.getGaussianKernel(k, 0, ktype=cv2.CV_64F).ravel()
        print(f"kernel k={k} center={g[k // 2]!r} edge={g[0]!r}")

    # gray blur on a 64x64 fixture, single channel
    x = fixture(64, 64)
    b = cv2.GaussianBlur(x, (15, 15), 0, borderType=cv2.BORDER_REFLECT_101)
    q = np.array(127.5 * (b + 1), dtype=np.uint8)
    _, t = cv2.threshold(q, 120, 255, cv2.THRESH_TRUNC)
    z = np.array(t, dtype=np.float64) / 127.5 - 1.0
    print(f"gray sum = {z.sum()!r} max = {z.max()!r} count_at_cap = {(t == 120).sum()}")

    # percentile of a ramp
    for n in (4096, 784, 100):
        v = np.arange(n, dtype=np.float64) / n
        p = np.percentile(v, 90)
        print(f"ramp n={n} p90={p!r} above={(v > p).sum()}")


if __name__ == "__main__":
    main()
