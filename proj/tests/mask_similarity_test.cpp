#include <algorithm>
#include <numeric>
#include <random>

#include "gsrm/assignment.hpp"
#include "gsrm/mask_similarity.hpp"
#include "gsrm/report.hpp"
#include "test_support.hpp"

namespace gsrm {
namespace {

// Exhaustive maximum of sum iou over injective matchings.
double brute_force_total(const MaskSet& a, const MaskSet& b) {
  const bool flip = a.size() > b.size();
  const MaskSet& s = flip ? b : a;
  const MaskSet& l = flip ? a : b;
  if (s.size() == 0) return 0.0;
  std::vector<std::size_t> perm(l.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double t = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) t += iou(s[i], l[perm[i]]);
    best = std::max(best, t);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

MaskSet random_set(std::mt19937& rng, std::size_t n, int w, int h) {
  std::uniform_int_distribution<int> coord(0, w - 1);
  MaskSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const int x = coord(rng), y = coord(rng) % h;
    const int rw = 1 + coord(rng) % (w - x), rh = 1 + coord(rng) % (h - y);
    set.push_back(test::rect_mask(w, h, x, y, rw, rh));
  }
  return set;
}

// Mask covering the first `count` pixels of rows [y0, y1) in a 10-wide grid.
BinaryMask strip(int y0, int y1, int count) {
  BinaryMask m(10, 10);
  int n = 0;
  for (int y = y0; y < y1 && n < count; ++y) {
    for (int x = 0; x < 10 && n < count; ++x, ++n) m.set(x, y);
  }
  return m;
}

TEST(Filter, EmptyObjectKeepsNothing) {
  MaskSet set;
  set.push_back(test::rect_mask(8, 8, 0, 0, 4, 4));
  EXPECT_TRUE(object_mask_indices(set, BinaryMask(8, 8)).empty());
}

TEST(Filter, ObjectItselfIsKept) {
  const auto obj = test::rect_mask(8, 8, 2, 2, 3, 3);
  MaskSet set;
  set.push_back(test::rect_mask(8, 8, 6, 6, 2, 2));
  set.push_back(obj);
  EXPECT_EQ(object_mask_indices(set, obj), std::vector<std::size_t>{1});
}

TEST(Filter, OnePixelOfHundredIsDropped) {
  const auto obj = test::rect_mask(20, 20, 5, 5, 10, 10);
  MaskSet set;
  set.push_back(test::rect_mask(20, 20, 5, 5, 1, 1));
  EXPECT_DOUBLE_EQ(iou(set[0], obj), 0.01);
  EXPECT_TRUE(object_mask_indices(set, obj).empty());
}

TEST(Filter, MaskFractionModeKeepsSmallInteriorPart) {
  const auto obj = test::rect_mask(20, 20, 5, 5, 10, 10);
  MaskSet set;
  set.push_back(test::rect_mask(20, 20, 6, 6, 2, 2));
  EXPECT_TRUE(object_mask_indices(set, obj, 0.1, OverlapMode::iou).empty());
  EXPECT_EQ(object_mask_indices(set, obj, 0.1, OverlapMode::mask_fraction).size(), 1u);
}

TEST(Match, IdenticalSetsPairUp) {
  std::mt19937 rng(1);
  const auto a = random_set(rng, 4, 12, 12);
  const auto m = match_masks(a, a);
  ASSERT_EQ(m.pairs.size(), 4u);
  for (const auto& p : m.pairs) {
    EXPECT_EQ(p.index_a, p.index_b);
    EXPECT_EQ(p.iou, 1.0);
  }
}

TEST(Match, PicksTheBetterOfTwo) {
  MaskSet a, b;
  a.push_back(strip(0, 1, 10));
  b.push_back(strip(0, 1, 3));
  b.push_back(strip(0, 1, 7));
  const auto m = match_masks(a, b);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0].index_a, 0u);
  EXPECT_EQ(m.pairs[0].index_b, 1u);
  EXPECT_DOUBLE_EQ(m.pairs[0].iou, 0.7);
}

TEST(Match, ThreeByThreeAgainstPermutations) {
  std::mt19937 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_set(rng, 3, 8, 8);
    const auto b = random_set(rng, 3, 8, 8);
    EXPECT_DOUBLE_EQ(match_masks(a, b).total_iou(), brute_force_total(a, b));
  }
}

TEST(Match, RectangularAgainstBruteForce) {
  std::mt19937 rng(4);
  std::uniform_int_distribution<std::size_t> n(0, 6);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_set(rng, n(rng), 10, 10);
    const auto b = random_set(rng, n(rng), 10, 10);
    const auto m = match_masks(a, b);
    EXPECT_NEAR(m.total_iou(), brute_force_total(a, b), 1e-12);
    EXPECT_LE(m.pairs.size(), std::min(a.size(), b.size()));
    for (const auto& p : m.pairs) EXPECT_GT(p.iou, 0.0);
  }
}

TEST(SimSam, IdenticalSetsScoreOne) {
  const auto obj = test::rect_mask(10, 10, 2, 2, 6, 6);
  MaskSet a;
  a.push_back(obj);
  a.push_back(test::rect_mask(10, 10, 2, 2, 3, 6));
  EXPECT_EQ(sim_sam(a, a, obj), 1.0);
}

TEST(SimSam, DisjointFilteredSetsScoreZero) {
  const auto obj = test::rect_mask(10, 10, 0, 0, 10, 10);
  MaskSet a, b;
  a.push_back(test::rect_mask(10, 10, 0, 0, 10, 3));
  b.push_back(test::rect_mask(10, 10, 0, 5, 10, 3));
  const auto r = sim_sam_detailed(a, b, obj);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_FALSE(r.no_overlap);
}

TEST(SimSam, NormalisesByLargerSet) {
  const BinaryMask obj = test::rect_mask(10, 10, 0, 0, 10, 10);
  MaskSet a, b;
  a.push_back(strip(0, 2, 20));
  a.push_back(strip(2, 6, 40));
  b.push_back(strip(0, 2, 16));
  b.push_back(strip(2, 6, 20));
  b.push_back(strip(6, 8, 20));
  const auto r = sim_sam_detailed(a, b, obj);
  EXPECT_EQ(r.kept_a.size(), 2u);
  EXPECT_EQ(r.kept_b.size(), 3u);
  EXPECT_NEAR(r.value, (0.8 + 0.5) / 3.0, 1e-12);
  EXPECT_EQ(format_fixed(r.value, 4), "0.4333");
}

TEST(SimSam, BothFilteredEmptyFlagsNoOverlap) {
  const auto obj = test::rect_mask(10, 10, 0, 0, 2, 2);
  MaskSet a;
  a.push_back(test::rect_mask(10, 10, 8, 8, 2, 2));
  const auto r = sim_sam_detailed(a, MaskSet{}, obj);
  EXPECT_TRUE(r.no_overlap);
  EXPECT_EQ(r.value, 0.0);
}

TEST(SimSam, MatchingIndicesReferToRawSets) {
  const auto obj = test::rect_mask(10, 10, 0, 0, 5, 5);
  MaskSet a, b;
  a.push_back(test::rect_mask(10, 10, 8, 8, 2, 2));  // filtered out
  a.push_back(obj);
  b.push_back(obj);
  const auto r = sim_sam_detailed(a, b, obj);
  ASSERT_EQ(r.matching.pairs.size(), 1u);
  EXPECT_EQ(r.matching.pairs[0].index_a, 1u);
  EXPECT_EQ(r.matching.pairs[0].index_b, 0u);
  EXPECT_EQ(r.value, 1.0);
}

TEST(SimSam, SymmetricAndBounded) {
  std::mt19937 rng(8);
  const auto obj = test::rect_mask(12, 12, 3, 3, 6, 6);
  for (int t = 0; t < 60; ++t) {
    const auto a = random_set(rng, 1 + t % 5, 12, 12);
    const auto b = random_set(rng, 1 + (t / 5) % 5, 12, 12);
    const double ab = sim_sam(a, b, obj), ba = sim_sam(b, a, obj);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(Assignment, RandomCostsMatchBruteForce) {
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = 1 + t % 6, c = 1 + (t / 6) % 6;
    CostMatrix cost(r, c);
    for (auto& v : cost.values) v = u(rng);
    const auto a = solve_assignment(cost);
    // brute force: rows into columns or columns into rows
    const std::size_t k = std::min(r, c);
    std::vector<std::size_t> perm(std::max(r, c));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += r <= c ? cost(i, perm[i]) : cost(perm[i], i);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(a.total_cost, best, 1e-12);
    std::vector<int> used(c, 0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (a.row_to_col[i] == Assignment::npos) continue;
      ++assigned;
      EXPECT_EQ(used[a.row_to_col[i]]++, 0);
    }
    EXPECT_EQ(assigned, k);
  }
}

TEST(Assignment, TiesResolveToLexicographicallySmallest) {
  CostMatrix cost(3, 3, 1.0);
  const auto a = solve_assignment(cost);
  EXPECT_EQ(a.row_to_col, (std::vector<std::size_t>{0, 1, 2}));

  CostMatrix c2(2, 3, 0.0);
  c2(0, 0) = 1.0;
  const auto b = solve_assignment(c2);
  EXPECT_EQ(b.row_to_col, (std::vector<std::size_t>{1, 0}));
}

TEST(Assignment, NonFiniteCostRejected) {
  CostMatrix cost(1, 1, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(solve_assignment(cost), Error);
}

}  // namespace
}  // namespace gsrm
