"""Online dictionary selection for kernel sparsification.

A candidate joins the dictionary when the squared distance between its
feature-space image and the span of the current members,

    delta = k(z, z) - ktilde^T Ktilde^{-1} ktilde,

exceeds the threshold ``tau``.  Admitted members extend the kernel matrix
(and its inverse, maintained by a partitioned rank-1 update); rejected
candidates record their projection coefficients.  The projection matrix A
reconstructs the full-sample kernel quantities as K ~ A Ktilde A^T.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from bpglab.errors import ContractViolation


class OnlineDictionary:
    def __init__(self, tau: float):
        if tau <= 0:
            raise ContractViolation("sparsification threshold tau must be positive")
        self.tau = float(tau)
        self.member_positions: list[int] = []  # stream positions of admitted inputs
        self.K = np.zeros((0, 0))
        self.Kinv = np.zeros((0, 0))
        self._rows: list[tuple[bool, object]] = []  # (is_member, member_idx | projection)
        self._offered = 0

    @property
    def size(self) -> int:
        return len(self.member_positions)

    def __len__(self) -> int:
        return self.size

    def offer(self, kzz: float, kvec: Optional[np.ndarray] = None) -> bool:
        """Consider one candidate; ``kvec`` holds its kernel values vs. members."""
        pos = self._offered
        self._offered += 1
        if self.size == 0:
            self._admit(pos, float(kzz), np.zeros(0))
            return True
        kvec = np.asarray(kvec, dtype=float).ravel()
        proj = self.Kinv @ kvec
        delta = float(kzz) - float(kvec @ proj)
        if delta > self.tau:
            self._admit(pos, float(kzz), kvec, proj, delta)
            return True
        self._rows.append((False, proj))
        return False

    def offer_block(self, kzz: np.ndarray, kcross: np.ndarray) -> int:
        """Process candidates until (and including) the first admission.

        ``kzz`` is (B,), ``kcross`` is (size, B) kernel values against the
        current members.  Returns how many candidates were consumed; the
        caller re-offers the rest against the grown dictionary.  Equivalent
        to offering one by one, but the rejections are vectorized.
        """
        b = len(kzz)
        if b == 0:
            return 0
        if self.size == 0:
            self.offer(float(kzz[0]))
            return 1
        proj = self.Kinv @ kcross  # (m, B)
        delta = np.asarray(kzz, dtype=float) - np.einsum("mb,mb->b", kcross, proj)
        admit_at = np.flatnonzero(delta > self.tau)
        upto = int(admit_at[0]) if admit_at.size else b
        for i in range(upto):
            self._rows.append((False, proj[:, i].copy()))
        self._offered += upto
        if admit_at.size:
            i = upto
            self._admit(self._offered, float(kzz[i]), kcross[:, i].copy(), proj[:, i].copy(),
                        float(delta[i]))
            self._offered += 1
            return upto + 1
        return upto

    def _admit(self, pos, kzz, kvec, proj=None, delta=None):
        m = self.size
        if m == 0:
            self.K = np.array([[kzz]])
            self.Kinv = np.array([[1.0 / kzz]]) if kzz > 0 else np.array([[0.0]])
        else:
            if proj is None:
                proj = self.Kinv @ kvec
                delta = kzz - float(kvec @ proj)
            newK = np.empty((m + 1, m + 1))
            newK[:m, :m] = self.K
            newK[:m, m] = kvec
            newK[m, :m] = kvec
            newK[m, m] = kzz
            self.K = newK
            inv = np.empty((m + 1, m + 1))
            inv[:m, :m] = self.Kinv + np.outer(proj, proj) / delta
            inv[:m, m] = -proj / delta
            inv[m, :m] = -proj / delta
            inv[m, m] = 1.0 / delta
            self.Kinv = inv
        self._rows.append((True, m))
        self.member_positions.append(pos)

    def projection_matrix(self) -> np.ndarray:
        """A with one row per offered input: indicator rows for members,
        projection coefficients (zero-padded to the final size) otherwise."""
        m = self.size
        a = np.zeros((len(self._rows), m))
        for i, (is_member, payload) in enumerate(self._rows):
            if is_member:
                a[i, payload] = 1.0
            else:
                row = payload
                a[i, : len(row)] = row
        return a
