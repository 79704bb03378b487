#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sfmsfv/grid.hpp"

using namespace sfv;

namespace {

DomainSpec spec_of(Index3 counts, Index3 nodes, Point3 ext) {
  DomainSpec s;
  s.subdomain_counts = counts;
  s.nodes_per_subdomain = nodes;
  s.extents = ext;
  return s;
}

// K = -S^{-1} A S^{-1} with S = c / sqrt(mass), i.e. the unscaled stiffness.
Mat unscaled_stiffness(const SpMat& a, const Vec& c, const Vec& mass) {
  const Vec s = c.array() / mass.array().sqrt();
  const Vec si = s.cwiseInverse();
  return -(si.asDiagonal() * Mat(a) * si.asDiagonal());
}

}  // namespace

TEST_CASE("partition geometry shares one node layer between neighbours") {
  const DomainPartition p = build_partition(spec_of({2, 1, 1}, {4, 4, 4}, {2, 1, 1}));
  CHECK(p.grid.dims == Index3{7, 4, 4});
  CHECK(p.grid.h[0] == doctest::Approx(1.0 / 3));
  CHECK(p.grid.h[1] == doctest::Approx(1.0 / 3));
  REQUIRE(p.subdomains.size() == 2);
  CHECK(p.subdomains[1].offset == Index3{3, 0, 0});
  CHECK(p.subdomains[0].neighbor[static_cast<int>(Face::x_hi)] == 1);
  CHECK(p.subdomains[1].neighbor[static_cast<int>(Face::x_lo)] == 0);
  CHECK(p.subdomains[0].neighbor[static_cast<int>(Face::y_lo)] == -1);
  REQUIRE(p.interfaces.size() == 1);
  CHECK(p.interfaces[0].nodes.size() == 16);
  for (int g : p.interfaces[0].nodes) CHECK(p.grid.coords(g)[0] == 3);
  CHECK(p.adjacency[0] == std::vector<int>{1});
}

TEST_CASE("subdomain index round trip and local to global map") {
  const DomainPartition p = build_partition(spec_of({3, 2, 2}, {3, 4, 2}, {3, 2, 2}));
  for (const auto& s : p.subdomains) {
    CHECK(p.subdomain_index(s.alpha) == s.id);
    for (int l = 0; l < s.size(); ++l) {
      const int g = s.local_to_global[l];
      CHECK(s.find_local(p.grid, g) == l);
      const Index3 ix = p.grid.coords(g);
      CHECK(p.grid.index(ix[0], ix[1], ix[2]) == g);
    }
  }
  CHECK(p.subdomain_index({3, 0, 0}) == -1);
}

TEST_CASE("three node chain has the symmetrised finite-volume rows") {
  const BoxOperator op = assemble_box_operator({3, 1, 1}, {1, 1, 1}, Vec::Ones(3));
  const Mat a(op.matrix);
  const double r2 = std::sqrt(2.0);
  Mat expect(3, 3);
  expect << -2, r2, 0, r2, -2, r2, 0, r2, -2;
  CHECK((a - expect).norm() < 1e-14);
  CHECK(op.mass[0] == 0.5);
  CHECK(op.mass[1] == 1.0);
}

TEST_CASE("box operator equals a Kronecker assembly with random sound speed") {
  const Index3 n{4, 3, 5};
  const Point3 h{0.3, 0.5, 0.25};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  const int N = n[0] * n[1] * n[2];
  Vec c(N);
  for (int i = 0; i < N; ++i) c[i] = u(rng);
  const BoxOperator op = assemble_box_operator(n, h, c);

  using oracle::chain_mass;
  using oracle::chain_stiffness;
  using oracle::kron;
  const Mat mx = chain_mass(n[0]), my = chain_mass(n[1]), mz = chain_mass(n[2]);
  const Mat k = kron(mz, kron(my, chain_stiffness(n[0], h[0]))) + kron(mz, kron(chain_stiffness(n[1], h[1]), mx)) +
                kron(chain_stiffness(n[2], h[2]), kron(my, mx));
  const Vec mass = kron(mz, kron(my, mx)).diagonal();
  const Vec s = c.array() / mass.array().sqrt();
  const Mat a = -(s.asDiagonal() * k * s.asDiagonal());

  CHECK((op.mass - mass).norm() == 0.0);
  CHECK((Mat(op.matrix) - a).norm() / a.norm() < 1e-14);
}

TEST_CASE("operator is symmetric, negative semidefinite, with the transformed constant in its kernel") {
  const Index3 n{4, 4, 3};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Vec c(48);
  for (int i = 0; i < 48; ++i) c[i] = u(rng);
  const BoxOperator op = assemble_box_operator(n, {0.2, 0.2, 0.4}, c);
  const Mat a(op.matrix);
  CHECK((a - a.transpose()).norm() == 0.0);
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(a).eigenvalues();
  CHECK(ev.maxCoeff() < 1e-10 * std::abs(ev.minCoeff()));
  const Vec w = op.mass.array().sqrt() / c.array();
  CHECK((a * w).norm() < 1e-12 * a.norm() * w.norm());
}

TEST_CASE("single-node axes contribute no coupling") {
  const BoxOperator op = assemble_box_operator({3, 1, 1}, {1, 7, 9}, Vec::Ones(3));
  const BoxOperator op2 = assemble_box_operator({3, 1, 1}, {1, 1, 1}, Vec::Ones(3));
  CHECK((Mat(op.matrix) - Mat(op2.matrix)).norm() == 0.0);
}

TEST_CASE("subdomain stiffness and mass sum to the global ones") {
  const DomainPartition p = build_partition(spec_of({2, 2, 2}, {3, 4, 3}, {1, 1.5, 1}));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.4, 1.6);
  Vec c(p.grid.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = u(rng);

  const GlobalOperator g = assemble_global_operator(p, c);
  const Mat kg = unscaled_stiffness(g.matrix, g.c, g.mass);
  Mat ksum = Mat::Zero(kg.rows(), kg.cols());
  Vec msum = Vec::Zero(kg.rows());
  for (const auto& s : p.subdomains) {
    const SubdomainOperator op = assemble_subdomain_operator(p, s, c);
    const Mat k = unscaled_stiffness(op.matrix, op.c, op.mass);
    for (int i = 0; i < s.size(); ++i) {
      msum[s.local_to_global[i]] += op.mass[i];
      for (int j = 0; j < s.size(); ++j) ksum(s.local_to_global[i], s.local_to_global[j]) += k(i, j);
    }
  }
  CHECK((ksum - kg).norm() / kg.norm() < 1e-13);
  CHECK((msum - g.mass).norm() < 1e-14);
}

TEST_CASE("face ownership is disjoint and matches across every link") {
  for (EdgeOwnership rule : {EdgeOwnership::axis_priority, EdgeOwnership::exclude}) {
    DomainSpec spec = spec_of({3, 2, 2}, {4, 5, 4}, {3, 2, 2});
    spec.edge_ownership = rule;
    const DomainPartition p = build_partition(spec);
    for (const auto& s : p.subdomains) {
      const auto faces = owned_face_nodes(p, s);
      std::set<int> seen;
      for (Face f : kAllFaces) {
        const FaceNodes& fn = faces[static_cast<int>(f)];
        CHECK(fn.active);
        CHECK(static_cast<int>(fn.nodes.size()) == fn.d1 * fn.d2);
        for (int l : fn.nodes) {
          CHECK(seen.insert(l).second);
          // Node lies on the face plane.
          const int g = s.local_to_global[l];
          const int ax = face_axis(f);
          const int plane = face_side(f) == 0 ? s.offset[ax] : s.offset[ax] + s.dims[ax] - 1;
          CHECK(p.grid.coords(g)[ax] == plane);
        }
      }
      // Counterpart on the neighbour: same global nodes in the same order.
      for (Face f : kAllFaces) {
        const int nb = s.neighbor[static_cast<int>(f)];
        if (nb < 0) continue;
        const auto other = owned_face_nodes(p, p.subdomains[nb]);
        const FaceNodes& mine = faces[static_cast<int>(f)];
        const FaceNodes& theirs = other[static_cast<int>(opposite(f))];
        REQUIRE(mine.nodes.size() == theirs.nodes.size());
        CHECK(mine.d1 == theirs.d1);
        for (std::size_t i = 0; i < mine.nodes.size(); ++i)
          CHECK(s.local_to_global[mine.nodes[i]] == p.subdomains[nb].local_to_global[theirs.nodes[i]]);
      }
    }
  }
}

TEST_CASE("ownership rules: axis priority keeps full interface layers, exclude drops edges") {
  DomainSpec spec = spec_of({2, 1, 1}, {4, 4, 4}, {2, 1, 1});
  const DomainPartition p = build_partition(spec);
  const auto faces = owned_face_nodes(p, p.subdomains[0]);
  CHECK(faces[static_cast<int>(Face::x_hi)].nodes.size() == 16);
  CHECK(faces[static_cast<int>(Face::y_lo)].nodes.size() == 2 * 2);  // strict interior x 1..2, z 1..2
  CHECK(faces[static_cast<int>(Face::x_lo)].nodes.size() == 4);

  spec.subdomain_counts = {2, 2, 1};
  spec.extents = {2, 2, 1};
  spec.edge_ownership = EdgeOwnership::exclude;
  const DomainPartition q = build_partition(spec);
  const auto ex = owned_face_nodes(q, q.subdomains[0]);
  // x_hi interface face loses the row shared with the y_hi interface.
  CHECK(ex[static_cast<int>(Face::x_hi)].d1 == 3);
  CHECK(ex[static_cast<int>(Face::x_hi)].d2 == 4);
  spec.edge_ownership = EdgeOwnership::axis_priority;
  const DomainPartition r = build_partition(spec);
  const auto ax = owned_face_nodes(r, r.subdomains[0]);
  CHECK(ax[static_cast<int>(Face::x_hi)].nodes.size() == 16);
  CHECK(ax[static_cast<int>(Face::y_hi)].d1 == 3);
}

TEST_CASE("exterior faces can be switched off") {
  DomainSpec spec = spec_of({2, 1, 1}, {4, 4, 4}, {2, 1, 1});
  spec.exterior_faces = false;
  const DomainPartition p = build_partition(spec);
  const auto faces = owned_face_nodes(p, p.subdomains[0]);
  int active = 0;
  for (const auto& f : faces) active += f.active;
  CHECK(active == 1);
  CHECK(faces[static_cast<int>(Face::x_hi)].nodes.size() == 16);
}

TEST_CASE("medium sampling: later regions win, boxes are inclusive") {
  const DomainPartition p = build_partition(spec_of({1, 1, 1}, {5, 5, 5}, {1, 1, 1}));
  MediumModel m;
  m.background_c = 2.0;
  m.regions.push_back({{{0, 0, 0}, {0.5, 1, 1}}, 1.0});
  m.regions.push_back({{{0.5, 0, 0}, {1, 1, 1}}, 3.0});
  const Vec c = sample_medium(m, p);
  CHECK(c[p.grid.index(0, 0, 0)] == 1.0);
  CHECK(c[p.grid.index(2, 1, 1)] == 3.0);
  CHECK(c[p.grid.index(4, 4, 4)] == 3.0);
  CHECK(m.contrast() == doctest::Approx(3.0));
}

TEST_CASE("invalid domains and media are rejected") {
  CHECK_THROWS_AS(build_partition(spec_of({2, 1, 1}, {1, 4, 4}, {1, 1, 1})), ConfigError);
  CHECK_THROWS_AS(build_partition(spec_of({0, 1, 1}, {4, 4, 4}, {1, 1, 1})), ConfigError);
  CHECK_THROWS_AS(build_partition(spec_of({1, 1, 1}, {4, 4, 4}, {-1, 1, 1})), ConfigError);
  MediumModel m;
  m.regions.push_back({{{0, 0, 0}, {1, 1, 1}}, -1.0});
  CHECK_THROWS_AS(m.validate(), ConfigError);
  CHECK_THROWS_AS(assemble_box_operator({2, 1, 1}, {1, 1, 1}, Vec::Ones(3)), ConfigError);
}

TEST_CASE("nearest node clamps to the grid") {
  const DomainPartition p = build_partition(spec_of({1, 1, 1}, {5, 5, 5}, {1, 1, 1}));
  CHECK(p.grid.nearest_node({0.26, 0.0, 0.0}) == p.grid.index(1, 0, 0));
  CHECK(p.grid.nearest_node({5.0, -1.0, 0.5}) == p.grid.index(4, 0, 2));
}
