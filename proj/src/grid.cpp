#include "sfmsfv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sfmsfv/log.hpp"

namespace sfv {

const char* face_name(Face f) {
  static const char* names[6] = {"x-", "x+", "y-", "y+", "z-", "z+"};
  return names[static_cast<int>(f)];
}

void DomainSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(extents[a] > 0.0) || !std::isfinite(extents[a]))
      throw ConfigError("domain.extents[" + std::to_string(a) + "] must be positive");
    if (subdomain_counts[a] < 1)
      throw ConfigError("domain.subdomain_counts[" + std::to_string(a) + "] must be >= 1");
    if (nodes_per_subdomain[a] < 1)
      throw ConfigError("domain.nodes_per_subdomain[" + std::to_string(a) + "] must be >= 1");
    if (nodes_per_subdomain[a] == 1 && subdomain_counts[a] > 1)
      throw ConfigError("domain.nodes_per_subdomain[" + std::to_string(a) +
                        "] must be >= 2 when the axis is split");
  }
  double total = 1.0;
  for (int a = 0; a < 3; ++a) total *= double(subdomain_counts[a]) * (nodes_per_subdomain[a] - 1) + 1;
  if (total > 2.0e9) throw ConfigError("domain: fine grid too large");
  if (outer_bc == OuterBc::sponge && (!(sponge.width > 0.0) || sponge.strength < 0.0))
    throw ConfigError("domain.sponge: width must be positive and strength non-negative");
}

bool Box::contains(const Point3& p) const {
  for (int a = 0; a < 3; ++a)
    if (p[a] < lo[a] || p[a] > hi[a]) return false;
  return true;
}

void MediumModel::validate() const {
  if (!(background_c > 0.0) || !std::isfinite(background_c))
    throw ConfigError("medium.background_c must be positive");
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    if (!(r.c > 0.0) || !std::isfinite(r.c))
      throw ConfigError("medium.regions[" + std::to_string(i) + "].c must be positive");
    for (int a = 0; a < 3; ++a)
      if (r.box.hi[a] < r.box.lo[a])
        throw ConfigError("medium.regions[" + std::to_string(i) + "].box has hi < lo");
  }
}

double MediumModel::contrast() const {
  double lo = background_c, hi = background_c;
  for (const auto& r : regions) {
    lo = std::min(lo, r.c);
    hi = std::max(hi, r.c);
  }
  return hi / lo;
}

Index3 GridGeometry::coords(int g) const {
  Index3 ix;
  ix[0] = g % dims[0];
  ix[1] = (g / dims[0]) % dims[1];
  ix[2] = g / (dims[0] * dims[1]);
  return ix;
}

Point3 GridGeometry::point(int g) const {
  const Index3 ix = coords(g);
  return {ix[0] * h[0], ix[1] * h[1], ix[2] * h[2]};
}

int GridGeometry::nearest_node(const Point3& p) const {
  Index3 ix;
  for (int a = 0; a < 3; ++a) {
    const long r = std::lround(p[a] / h[a]);
    ix[a] = static_cast<int>(std::clamp<long>(r, 0, dims[a] - 1));
  }
  return index(ix[0], ix[1], ix[2]);
}

int SubdomainDesc::find_local(const GridGeometry& grid, int g) const {
  const Index3 ix = grid.coords(g);
  Index3 l;
  for (int a = 0; a < 3; ++a) {
    l[a] = ix[a] - offset[a];
    if (l[a] < 0 || l[a] >= dims[a]) return -1;
  }
  return local_index(l[0], l[1], l[2]);
}

int DomainPartition::subdomain_index(const Index3& alpha) const {
  const Index3& n = spec.subdomain_counts;
  for (int a = 0; a < 3; ++a)
    if (alpha[a] < 0 || alpha[a] >= n[a]) return -1;
  return alpha[0] + n[0] * (alpha[1] + n[1] * alpha[2]);
}

DomainPartition build_partition(const DomainSpec& spec) {
  spec.validate();
  DomainPartition part;
  part.spec = spec;
  for (int a = 0; a < 3; ++a) {
    const int cells = spec.subdomain_counts[a] * (spec.nodes_per_subdomain[a] - 1);
    part.grid.dims[a] = cells + 1;
    part.grid.h[a] = cells > 0 ? spec.extents[a] / cells : spec.extents[a];
  }
  const Index3& cnt = spec.subdomain_counts;
  const int nsub = cnt[0] * cnt[1] * cnt[2];
  part.subdomains.resize(nsub);
  part.adjacency.resize(nsub);
  for (int k = 0; k < cnt[2]; ++k)
    for (int j = 0; j < cnt[1]; ++j)
      for (int i = 0; i < cnt[0]; ++i) {
        const Index3 alpha{i, j, k};
        const int id = part.subdomain_index(alpha);
        SubdomainDesc& s = part.subdomains[id];
        s.id = id;
        s.alpha = alpha;
        s.dims = spec.nodes_per_subdomain;
        for (int a = 0; a < 3; ++a) s.offset[a] = alpha[a] * (s.dims[a] - 1);
        for (Face f : kAllFaces) {
          Index3 nb = alpha;
          nb[face_axis(f)] += face_side(f) == 0 ? -1 : 1;
          s.neighbor[static_cast<int>(f)] = part.subdomain_index(nb);
        }
        s.local_to_global.resize(s.size());
        for (int lz = 0; lz < s.dims[2]; ++lz)
          for (int ly = 0; ly < s.dims[1]; ++ly)
            for (int lx = 0; lx < s.dims[0]; ++lx)
              s.local_to_global[s.local_index(lx, ly, lz)] =
                  part.grid.index(s.offset[0] + lx, s.offset[1] + ly, s.offset[2] + lz);
      }
  for (const auto& s : part.subdomains) {
    for (Face f : kAllFaces) {
      const int nb = s.neighbor[static_cast<int>(f)];
      if (nb < 0) continue;
      part.adjacency[s.id].push_back(nb);
      if (face_side(f) != 1) continue;
      InterfaceLayer layer;
      layer.lo = s.id;
      layer.hi = nb;
      layer.axis = face_axis(f);
      Index3 lo{0, 0, 0}, hi{s.dims[0] - 1, s.dims[1] - 1, s.dims[2] - 1};
      lo[layer.axis] = hi[layer.axis];
      for (int lz = lo[2]; lz <= hi[2]; ++lz)
        for (int ly = lo[1]; ly <= hi[1]; ++ly)
          for (int lx = lo[0]; lx <= hi[0]; ++lx)
            layer.nodes.push_back(s.local_to_global[s.local_index(lx, ly, lz)]);
      part.interfaces.push_back(std::move(layer));
    }
    std::sort(part.adjacency[s.id].begin(), part.adjacency[s.id].end());
  }
  return part;
}

Vec sample_medium(const MediumModel& medium, const DomainPartition& partition) {
  medium.validate();
  const GridGeometry& grid = partition.grid;
  const Point3& ext = partition.spec.extents;
  for (std::size_t i = 0; i < medium.regions.size(); ++i) {
    const Box& b = medium.regions[i].box;
    for (int a = 0; a < 3; ++a)
      if (b.lo[a] < 0.0 || b.hi[a] > ext[a]) {
        log_info("medium region " + std::to_string(i) + " clipped to the domain");
        break;
      }
  }
  Vec c(grid.size());
  for (int g = 0; g < grid.size(); ++g) {
    const Point3 p = grid.point(g);
    double v = medium.background_c;
    for (const auto& r : medium.regions)
      if (r.box.contains(p)) v = r.c;
    c[g] = v;
  }
  return c;
}

BoxOperator assemble_box_operator(const Index3& n, const Point3& h, const Vec& c) {
  const int N = n[0] * n[1] * n[2];
  if (c.size() != N) throw ConfigError("assemble: sound speed field has wrong length");
  for (int i = 0; i < N; ++i)
    if (!(c[i] > 0.0) || !std::isfinite(c[i]))
      throw ConfigError("assemble: sound speed must be positive at every node");

  auto frac = [&](int l, int a) { return (n[a] > 1 && (l == 0 || l == n[a] - 1)) ? 0.5 : 1.0; };
  auto idx = [&](int i, int j, int k) { return i + n[0] * (j + n[1] * k); };

  BoxOperator out;
  out.mass.resize(N);
  Vec s(N);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        const int p = idx(i, j, k);
        out.mass[p] = frac(i, 0) * frac(j, 1) * frac(k, 2);
        s[p] = c[p] / std::sqrt(out.mass[p]);
      }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(N) * 7);
  Vec diag = Vec::Zero(N);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        const Index3 l{i, j, k};
        const int p = idx(i, j, k);
        for (int a = 0; a < 3; ++a) {
          if (l[a] + 1 >= n[a]) continue;
          Index3 q = l;
          ++q[a];
          const int pq = idx(q[0], q[1], q[2]);
          double area = 1.0;
          for (int b = 0; b < 3; ++b)
            if (b != a) area *= frac(l[b], b);
          const double kappa = area / (h[a] * h[a]);
          const double v = s[p] * kappa * s[pq];
          trip.emplace_back(p, pq, v);
          trip.emplace_back(pq, p, v);
          diag[p] += kappa;
          diag[pq] += kappa;
        }
      }
  for (int p = 0; p < N; ++p) trip.emplace_back(p, p, -s[p] * s[p] * diag[p]);
  out.matrix.resize(N, N);
  out.matrix.setFromTriplets(trip.begin(), trip.end());
  out.matrix.makeCompressed();
  return out;
}

std::array<FaceNodes, 6> owned_face_nodes(const DomainPartition& partition, const SubdomainDesc& sub) {
  const DomainSpec& spec = partition.spec;
  const Index3& n = sub.dims;
  std::array<FaceNodes, 6> faces;
  auto exists = [&](Face f) { return n[face_axis(f)] > 1; };
  auto active = [&](Face f) { return exists(f) && (sub.is_interface(f) || spec.exterior_faces); };

  for (Face f : kAllFaces) {
    FaceNodes& fn = faces[static_cast<int>(f)];
    fn.interface = sub.is_interface(f);
    fn.neighbor = sub.neighbor[static_cast<int>(f)];
    fn.active = active(f);
    if (!fn.active) continue;
    const int ax = face_axis(f);
    Index3 lo{0, 0, 0}, hi{n[0] - 1, n[1] - 1, n[2] - 1};
    lo[ax] = hi[ax] = face_side(f) == 0 ? 0 : n[ax] - 1;
    for (int b = 0; b < 3; ++b) {
      if (b == ax || n[b] == 1) continue;
      for (int side = 0; side < 2; ++side) {
        const Face g = make_face(b, side);
        bool keep;
        if (!active(g)) {
          keep = true;
        } else if (fn.interface && !sub.is_interface(g)) {
          keep = true;
        } else if (fn.interface && sub.is_interface(g)) {
          keep = spec.edge_ownership == EdgeOwnership::axis_priority && ax < b;
        } else {
          keep = false;  // exterior face meets an active face: not ours
        }
        if (!keep) {
          if (side == 0)
            lo[b] = 1;
          else
            hi[b] = n[b] - 2;
        }
      }
    }
    int t[2], k = 0;
    for (int b = 0; b < 3; ++b)
      if (b != ax) t[k++] = b;
    fn.d1 = std::max(0, hi[t[0]] - lo[t[0]] + 1);
    fn.d2 = std::max(0, hi[t[1]] - lo[t[1]] + 1);
    for (int lz = lo[2]; lz <= hi[2]; ++lz)
      for (int ly = lo[1]; ly <= hi[1]; ++ly)
        for (int lx = lo[0]; lx <= hi[0]; ++lx) fn.nodes.push_back(sub.local_index(lx, ly, lz));
  }
  return faces;
}

SubdomainOperator assemble_subdomain_operator(const DomainPartition& partition, const SubdomainDesc& sub,
                                              const Vec& c_global) {
  if (c_global.size() != partition.grid.size())
    throw ConfigError("assemble: sound speed field does not match the grid");
  SubdomainOperator op;
  op.id = sub.id;
  op.alpha = sub.alpha;
  op.dims = sub.dims;
  op.h = partition.grid.h;
  op.c.resize(sub.size());
  for (int l = 0; l < sub.size(); ++l) op.c[l] = c_global[sub.local_to_global[l]];
  BoxOperator box = assemble_box_operator(sub.dims, op.h, op.c);
  op.matrix = std::move(box.matrix);
  op.mass = std::move(box.mass);
  op.faces = owned_face_nodes(partition, sub);
  return op;
}

GlobalOperator assemble_global_operator(const DomainPartition& partition, const Vec& c_global) {
  GlobalOperator op;
  op.grid = partition.grid;
  op.c = c_global;
  BoxOperator box = assemble_box_operator(partition.grid.dims, partition.grid.h, c_global);
  op.matrix = std::move(box.matrix);
  op.mass = std::move(box.mass);
  return op;
}

}  // namespace sfv
