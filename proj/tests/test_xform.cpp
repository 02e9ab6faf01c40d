#include <gtest/gtest.h>

#include <random>

#include "dcl/xform.hpp"
#include "test_support.hpp"

using namespace dcl;

TEST(XformMatrix, Examples) {
  EXPECT_EQ(xform_matrix(Vec2::Zero()).matrix(), Mat3(Mat3::Identity()));
  Mat3 t, ti;
  t << 1, 0, 2, 0, 1, -1, 0, 0, 1;
  ti << 1, 0, -2, 0, 1, 1, 0, 0, 1;
  EXPECT_EQ(xform_matrix(Vec2(1, 2)).matrix(), t);
  EXPECT_EQ(xform_matrix(Vec2(1, 2)).inverse(), ti);
}

TEST(XformMatrix, InverseIsExact) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    const auto x = xform_matrix(test::random_pose(rng).position);
    EXPECT_LT((x.matrix() * x.inverse() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DecomposeF, Examples) {
  const auto d0 = decompose_F(Pose2(0, 0, 0), Pose2(0, 0, 0));
  EXPECT_EQ(Mat3(d0.left * d0.right), Mat3(Mat3::Identity()));

  const auto d = decompose_F(Pose2(1, 0, 0), Pose2(0.9, 0, 0));
  const Mat3 f = d.left * d.right;
  EXPECT_NEAR(f(0, 2), 0.0, 1e-15);
  EXPECT_NEAR(f(1, 2), 0.1, 1e-15);
}

TEST(DecomposeF, MatchesMotionJacobian) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 200; ++k) {
    const Pose2 prior = test::random_pose(rng), post = test::random_pose(rng);
    const auto d = decompose_F(prior, post);
    EXPECT_LT((d.left * d.right - motion_jacobians(prior, post).F).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TransformedMotion, Examples) {
  const auto j = transformed_motion_jacobians(Pose2(1, 2, 0), Pose2(0, 0, 0));
  EXPECT_EQ(j.F, Mat3(Mat3::Identity()));
  Mat3 g;
  g << 1, 0, 2, 0, 1, -1, 0, 0, 1;
  EXPECT_LT((j.G - g).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TransformedMotion, TripleProductIsIdentity) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 200; ++k) {
    const Pose2 prior = test::random_pose(rng), post = test::random_pose(rng);
    const Mat3 f = motion_jacobians(prior, post).F;
    const Mat3 tri = xform_matrix(prior.position).matrix() * f * xform_matrix(post.position).inverse();
    EXPECT_LT((tri - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    const Mat3 g = xform_matrix(prior.position).matrix() * motion_jacobians(prior, post).G;
    EXPECT_LT((transformed_motion_jacobians(prior, post).G - g).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TransformedMeas, Examples) {
  const auto h = transformed_meas_jacobians(Pose2(0, 0, 0), Pose2(1, 2, 0));
  Mat23 hi, hj;
  hi << -1, 0, 2, 0, -1, -1;
  hj << 1, 0, -2, 0, 1, 1;
  EXPECT_LT((h.Hi - hi).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((h.Hj - hj).cwiseAbs().maxCoeff(), 1e-15);

  const auto z = transformed_meas_jacobians(Pose2(3, 1, 0.4), Pose2(0, 0, 1.0));
  EXPECT_LT(z.Hi.col(2).norm() + z.Hj.col(2).norm(), 1e-15);
}

TEST(TransformedMeas, EqualsOriginalTimesInverse) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 200; ++k) {
    const Pose2 xi = test::random_pose(rng), xj = test::random_pose(rng);
    const auto h = meas_jacobians(xi, xj);
    const auto t = transformed_meas_jacobians(xi, xj);
    EXPECT_LT((h.Hi * xform_matrix(xi.position).inverse() - t.Hi).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((h.Hj * xform_matrix(xj.position).inverse() - t.Hj).cwiseAbs().maxCoeff(), 1e-12);
    const Vec2 lm = test::random_pose(rng).position;
    EXPECT_LT((landmark_jacobian(xi, lm) * xform_matrix(xi.position).inverse() -
               transformed_landmark_jacobian(xi, lm))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(TransformedCov, ZeroAnchorsLeaveUnchanged) {
  std::mt19937_64 rng(9);
  const MatN P = test::random_spd(rng, 6);
  const std::vector<Vec2> anchors{Vec2::Zero(), Vec2::Zero()};
  EXPECT_EQ(to_transformed_cov(P, anchors), P);
}

TEST(TransformedCov, IdentityExample) {
  const std::vector<Vec2> anchors{Vec2(1, 2), Vec2::Zero()};
  const MatN out = to_transformed_cov(MatN::Identity(6, 6), anchors);
  Mat3 expect;
  expect << 5, -2, 2, -2, 2, -1, 2, -1, 1;
  EXPECT_LT((out.topLeftCorner<3, 3>() - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TransformedCov, RoundTrip) {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 50; ++k) {
    const MatN P = test::random_spd(rng, 9);
    const std::vector<Vec2> anchors{test::random_pose(rng).position, test::random_pose(rng).position,
                                    test::random_pose(rng).position};
    EXPECT_LT(test::rel_err(from_transformed_cov(to_transformed_cov(P, anchors), anchors), P), 1e-12);
  }
}

TEST(TransformedCov, RejectsShapeMismatch) {
  const std::vector<Vec2> anchors{Vec2::Zero()};
  EXPECT_THROW(to_transformed_cov(MatN::Identity(6, 6), anchors), Error);
}
