import numpy as np
import pytest

from ivcate import FeatureMap


class TestFeatureMap:
    def test_raw(self):
        phi = FeatureMap.raw(3)
        x = np.arange(6, dtype=float).reshape(2, 3)
        np.testing.assert_array_equal(phi.transform(x), x)
        assert phi.output_dim == 3

    def test_with_intercept(self):
        phi = FeatureMap.with_intercept(2)
        out = phi.transform(np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(out, [[1.0, 3.0, 4.0]])

    def test_polynomial(self):
        phi = FeatureMap.polynomial(1, 2)
        out = phi.transform(np.array([[2.0], [-1.0]]))
        np.testing.assert_array_equal(out, [[2.0, 4.0], [-1.0, 1.0]])
        with_int = FeatureMap.polynomial(1, 2, intercept=True)
        np.testing.assert_array_equal(with_int.transform(np.array([[2.0]])),
                                      [[1.0, 2.0, 4.0]])

    def test_pairwise_interactions_dimension(self):
        phi = FeatureMap.pairwise_interactions(9)
        assert phi.output_dim == 46
        out = phi.transform(np.zeros((1, 9)))
        assert out.shape == (1, 46)

    def test_pairwise_all_zero_input(self):
        phi = FeatureMap.pairwise_interactions(9)
        out = phi.transform(np.zeros((2, 9)))[0]
        assert out[0] == 1.0
        np.testing.assert_array_equal(out[1:], 0.0)

    def test_pairwise_product_feature(self):
        names = ("age", "inc", "educ")
        phi = FeatureMap.pairwise_interactions(3, names=names)
        assert phi.output_dim == 1 + 3 + 3
        x = np.array([[2.0, 5.0, 7.0]])
        out = phi.transform(x)[0]
        idx = phi.feature_names.index("age*inc")
        assert out[idx] == 10.0
        assert phi.feature_names[0] == "1"
        assert phi.feature_names[1:4] == names

    def test_input_dim_validation(self):
        phi = FeatureMap.raw(2)
        with pytest.raises(ValueError, match="expects 2"):
            phi.transform(np.zeros((4, 3)))

    def test_custom(self):
        phi = FeatureMap.custom(lambda x: x**2, input_dim=2, output_dim=2)
        np.testing.assert_array_equal(phi.transform(np.array([[2.0, 3.0]])),
                                      [[4.0, 9.0]])
        bad = FeatureMap.custom(lambda x: x[:, :1], input_dim=2, output_dim=2)
        with pytest.raises(ValueError, match="produced"):
            bad.transform(np.zeros((3, 2)))

    def test_deterministic(self):
        phi = FeatureMap.pairwise_interactions(4)
        x = np.random.default_rng(0).standard_normal((10, 4))
        np.testing.assert_array_equal(phi.transform(x), phi.transform(x))
