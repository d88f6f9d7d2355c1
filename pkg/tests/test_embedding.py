"""
Tests for embedding storage, normalisation, cosine similarity and RULR files.
"""

import struct

import numpy as np
import pytest

from ruler.core.errors import (
    DimMismatchError,
    EmbeddingFormatError,
    IndexOutOfRangeError,
    NotNormalizedError,
    ZeroNormRowError,
)
from ruler.embedding.io import from_bytes, read_rulr, to_bytes, write_rulr
from ruler.embedding.matrix import (
    EmbeddingMatrix,
    ModelRole,
    ModelTriple,
    cosine_cross,
    cosine_within,
    cross_similarities,
    iter_similarity_blocks,
    l2_normalize,
)


def _random(n=20, d=8, seed=0, role=ModelRole.EXTERNAL):
    rng = np.random.default_rng(seed)
    return EmbeddingMatrix(data=rng.normal(size=(n, d)), model_role=role)


class TestEmbeddingMatrix:
    """Tests for the matrix type."""

    def test_shape_and_dtype(self):
        """Test data is stored as float32."""
        m = _random(5, 3)

        assert m.n_records == 5
        assert m.dim == 3
        assert m.data.dtype == np.float32

    def test_immutable(self):
        """Test the underlying array cannot be written."""
        m = _random()

        with pytest.raises(ValueError):
            m.data[0, 0] = 1.0

    def test_rejects_non_finite(self):
        """Test NaN rows are rejected."""
        with pytest.raises(ValueError):
            EmbeddingMatrix(data=[[1.0, float("nan")]])

    def test_rejects_empty(self):
        """Test empty matrices are rejected."""
        with pytest.raises(ValueError):
            EmbeddingMatrix(data=np.zeros((0, 3)))

    def test_normalized_flag_checked(self):
        """Test the normalized flag is validated against row norms."""
        with pytest.raises(ValueError):
            EmbeddingMatrix(data=[[3.0, 4.0]], normalized=True)

    def test_row_out_of_range(self):
        """Test out-of-range row access raises."""
        m = _random(4)

        with pytest.raises(IndexOutOfRangeError):
            m.row(4)
        with pytest.raises(IndexOutOfRangeError):
            m.rows([0, 9])


class TestNormalization:
    """Tests for L2 normalisation."""

    def test_unit_norms(self):
        """Test every row has unit norm after normalisation."""
        m = l2_normalize(_random(50, 16))

        norms = np.linalg.norm(m.data.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)
        assert m.normalized

    def test_idempotent(self):
        """Test normalising twice changes nothing beyond float noise."""
        once = l2_normalize(_random())
        twice = l2_normalize(once)

        np.testing.assert_allclose(once.data, twice.data, atol=1e-6)

    def test_role_preserved(self):
        """Test the role tag survives normalisation."""
        m = l2_normalize(_random(role=ModelRole.ORACLE))

        assert m.model_role == ModelRole.ORACLE

    def test_zero_row(self):
        """Test a dead row raises with its index."""
        data = np.ones((4, 3))
        data[2] = 0.0

        with pytest.raises(ZeroNormRowError) as exc:
            l2_normalize(EmbeddingMatrix(data=data))
        assert exc.value.row_index == 2


class TestCosine:
    """Tests for cosine similarity primitives."""

    def test_identical_rows(self):
        """Test a record compared with itself across copies gives 1."""
        m = l2_normalize(_random())

        assert cosine_cross(m, m, 3) == pytest.approx(1.0, abs=1e-6)
        assert cosine_within(m, 5, 5) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_and_opposite(self):
        """Test orthogonal rows give 0 and opposite rows give -1."""
        m = l2_normalize(EmbeddingMatrix(data=[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))

        assert cosine_within(m, 0, 1) == pytest.approx(0.0)
        assert cosine_within(m, 0, 2) == pytest.approx(-1.0)

    def test_requires_normalized(self):
        """Test unnormalised input is refused."""
        m = _random()

        with pytest.raises(NotNormalizedError):
            cosine_within(m, 0, 1)
        with pytest.raises(NotNormalizedError):
            cross_similarities(m, m, [0, 1])

    def test_dim_mismatch(self):
        """Test cross-model cosine needs equal dims."""
        a = l2_normalize(_random(10, 4))
        b = l2_normalize(_random(10, 5))

        with pytest.raises(DimMismatchError):
            cosine_cross(a, b, 0)

    def test_cross_similarities_matches_scalar(self):
        """Test the vectorised path equals per-record cosine."""
        a = l2_normalize(_random(seed=1))
        b = l2_normalize(_random(seed=2))
        records = [0, 4, 7, 19]

        vector = cross_similarities(a, b, records)
        scalar = [cosine_cross(a, b, r) for r in records]

        np.testing.assert_allclose(vector, scalar, atol=1e-12)
        assert np.all(np.abs(vector) <= 1.0 + 1e-6)

    def test_similarity_blocks(self):
        """Test blocked products cover all rows."""
        q = np.arange(12.0).reshape(6, 2)
        pool = np.eye(2)

        blocks = list(iter_similarity_blocks(q, pool, block_rows=4))

        assert [offset for offset, _ in blocks] == [0, 4]
        np.testing.assert_array_equal(np.vstack([b for _, b in blocks]), q)


class TestModelTriple:
    """Tests for the original/unlearned/oracle bundle."""

    def test_original_optional(self):
        """Test a triple without the original."""
        u = l2_normalize(_random(seed=1))
        o = l2_normalize(_random(seed=2))

        triple = ModelTriple(unlearned=u, oracle=o)

        assert triple.original is None
        assert triple.normalized
        assert len(triple.present()) == 2

    def test_shape_mismatch(self):
        """Test mismatched shapes are rejected."""
        with pytest.raises(ValueError):
            ModelTriple(unlearned=_random(10), oracle=_random(11))


class TestRulrFiles:
    """Tests for the RULR binary format."""

    def test_file_round_trip(self, tmp_path):
        """Test writing and reading preserves data and flag."""
        m = l2_normalize(_random(7, 5))

        loaded = read_rulr(write_rulr(tmp_path / "u.rulr", m), ModelRole.UNLEARNED)

        np.testing.assert_array_equal(loaded.data, m.data)
        assert loaded.normalized
        assert loaded.model_role == ModelRole.UNLEARNED

    def test_layout(self):
        """Test the header layout is little-endian magic, version, n, dim."""
        buf = to_bytes(EmbeddingMatrix(data=np.ones((2, 3))))

        magic, version, n, dim = struct.unpack_from("<4sIQQ", buf, 0)
        assert (magic, version, n, dim) == (b"RULR", 1, 2, 3)
        assert len(buf) == 24 + 2 * 3 * 4 + 1
        assert buf[-1] == 0

    def test_bad_magic(self):
        """Test corrupt magic is rejected."""
        buf = bytearray(to_bytes(_random(2, 2)))
        buf[0:4] = b"XXXX"

        with pytest.raises(EmbeddingFormatError):
            from_bytes(bytes(buf))

    def test_truncated(self):
        """Test a size mismatch is rejected."""
        buf = to_bytes(_random(3, 3))

        with pytest.raises(EmbeddingFormatError):
            from_bytes(buf[:-5])

    def test_bad_flag(self):
        """Test a flag byte outside {0, 1} is rejected."""
        buf = bytearray(to_bytes(_random(2, 2)))
        buf[-1] = 7

        with pytest.raises(EmbeddingFormatError):
            from_bytes(bytes(buf))

    def test_missing_file(self, tmp_path):
        """Test unreadable files raise a format error."""
        with pytest.raises(EmbeddingFormatError):
            read_rulr(tmp_path / "absent.rulr")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
