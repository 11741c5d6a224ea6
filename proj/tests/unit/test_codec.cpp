// Copyright 2026 The CAP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <random>

#include "cap/codec.hpp"
#include "cap/egogym.hpp"
#include "cap/error.hpp"
#include "cap/labeler.hpp"
#include "cap/policy.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cap;
using codec::Vector;

namespace {

Vector v1(double x) {
  Vector v(1);
  v << x;
  return v;
}

std::vector<Vector> demo_actions(int episodes) {
  std::vector<Vector> out;
  egogym::CollectOptions co;
  co.render_images = false;
  for (int i = 0; i < episodes; ++i) {
    const auto c = egogym::collect_oracle_episode(Task::kPick, 300 + i, co);
    for (auto& a : policy::episode_actions(c.episode)) out.push_back(a);
  }
  return out;
}

// Brute-force nearest codeword, lowest index on ties.
int nearest(const Eigen::MatrixXd& words, const Vector& r) {
  int best = 0;
  double bd = (words.row(0).transpose() - r).squaredNorm();
  for (int k = 1; k < words.rows(); ++k) {
    const double d = (words.row(k).transpose() - r).squaredNorm();
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("separable toy clusters") {
  std::vector<Vector> a;
  for (int i = 0; i < 50; ++i) a.push_back(v1(-1));
  for (int i = 0; i < 50; ++i) a.push_back(v1(1));
  const codec::Codebook cb = codec::fit(a, {2});
  std::vector<double> c;
  for (int k = 0; k < 2; ++k) {
    const int code[] = {k};
    c.push_back(codec::decode(cb, code)(0));
  }
  std::sort(c.begin(), c.end());
  CHECK(std::abs(c[0] + 1.0) < 1e-12);
  CHECK(std::abs(c[1] - 1.0) < 1e-12);
  const int plus = std::abs(codec::decode(cb, std::vector<int>{0})(0) - 1.0) < 1e-9 ? 0 : 1;
  CHECK(codec::encode(cb, v1(0.9))[0] == plus);
  // A centroid is a fixed point.
  CHECK(std::abs(codec::decode(cb, codec::encode(cb, v1(1.0)))(0) - 1.0) < 1e-12);
}

TEST_CASE("zero-variance data warns and collapses") {
  std::vector<Vector> a(10, v1(0.3));
  const codec::Codebook cb = codec::fit(a, {2});
  CHECK_FALSE(cb.warnings.empty());
  CHECK(cb.scale(0) == 1.0);
  for (int k = 0; k < 2; ++k) {
    CHECK(codec::decode(cb, std::vector<int>{k})(0) == doctest::Approx(0.3));
  }
}

TEST_CASE("fit argument errors") {
  std::vector<Vector> a(3, v1(0.0));
  try {
    codec::fit(a, {4});
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientData);
  }
  CHECK_THROWS_AS(codec::fit(a, {}), Error);
  CHECK_THROWS_AS(codec::fit(a, {1}), Error);
}

TEST_CASE("demo codebook properties") {
  const std::vector<Vector> acts = demo_actions(40);
  REQUIRE(acts.size() > 200);
  const codec::Codebook cb = codec::fit(acts, {16, 16});

  SUBCASE("residual stages do not increase error") {
    const double m1 = codec::reconstruction_mse(cb, acts, 1);
    const double m2 = codec::reconstruction_mse(cb, acts, 2);
    CHECK(m2 <= m1);
    double r1 = 0, r2 = 0;
    for (const auto& a : acts) {
      const Vector z = cb.normalize(a);
      const auto codes = codec::encode(cb, a);
      r1 += (z - cb.stages[0].row(codes[0]).transpose()).norm();
      r2 += (z - codec::decode_normalized(cb, codes)).norm();
    }
    CHECK(r2 < r1);
  }
  SUBCASE("encode is nearest codeword on successive residuals") {
    for (size_t i = 0; i < acts.size(); i += 7) {
      Vector r = cb.normalize(acts[i]);
      const auto codes = codec::encode(cb, acts[i]);
      for (int s = 0; s < cb.stage_count(); ++s) {
        CHECK(codes[s] == nearest(cb.stages[s], r));
        r -= cb.stages[s].row(codes[s]).transpose();
      }
    }
  }
  SUBCASE("encode idempotence") {
    for (const auto& a : acts) {
      const auto c = codec::encode(cb, a);
      REQUIRE(codec::encode(cb, codec::decode(cb, c)) == c);
    }
  }
  SUBCASE("no duplicate codewords within a stage") {
    for (const auto& words : cb.stages) {
      for (int i = 0; i < words.rows(); ++i) {
        for (int j = i + 1; j < words.rows(); ++j) CHECK(words.row(i) != words.row(j));
      }
    }
  }
  SUBCASE("serialization round trip") {
    test::TempDir tmp("codec");
    codec::save_codebook(cb, tmp.path() / "cb.json");
    const codec::Codebook back = codec::load_codebook(tmp.path() / "cb.json");
    CHECK(back == cb);
    CHECK(codec::codebook_hash(back) == codec::codebook_hash(cb));
  }
  SUBCASE("decode rejects bad indices") {
    CHECK_THROWS_AS(codec::decode(cb, std::vector<int>{16, 0}), Error);
    CHECK_THROWS_AS(codec::decode(cb, std::vector<int>{0}), Error);
    CHECK_THROWS_AS(codec::decode(cb, std::vector<int>{-1, 0}), Error);
  }
}

TEST_CASE("scaling every action leaves code assignments unchanged") {
  std::mt19937_64 g(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vector> a, b;
  for (int i = 0; i < 300; ++i) {
    Vector v(3);
    v << n(g), 3.0 * n(g), n(g) + (i % 3);
    a.push_back(v);
    b.push_back(4.0 * v);
  }
  const codec::Codebook ca = codec::fit(a, {8, 4});
  const codec::Codebook cb = codec::fit(b, {8, 4});
  for (size_t i = 0; i < a.size(); ++i) CHECK(codec::encode(ca, a[i]) == codec::encode(cb, b[i]));
}

TEST_CASE("fit is deterministic given the seed") {
  const std::vector<Vector> acts = demo_actions(10);
  codec::FitOptions o;
  o.seed = 12;
  CHECK(codec::fit(acts, {8, 8}, o) == codec::fit(acts, {8, 8}, o));
}
