#pragma once

#include <vector>

#include "sfmsfv/common.hpp"

namespace sfv {

enum class OuterBc { reflecting, sponge };

// Who owns a node that lies on several faces of a subdomain.
//  axis_priority: a node on an interface face and exterior faces goes to the
//    interface face; among interface faces the lowest axis wins.
//  exclude: edge and corner nodes of interface faces belong to no face.
enum class EdgeOwnership { axis_priority, exclude };

struct SpongeSpec {
  double width = 0.0;     // damping layer thickness in domain units
  double strength = 0.0;  // peak damping rate sigma at the wall
};

struct DomainSpec {
  Point3 extents{1.0, 1.0, 1.0};
  Index3 subdomain_counts{1, 1, 1};
  Index3 nodes_per_subdomain{2, 2, 2};
  OuterBc outer_bc = OuterBc::reflecting;
  SpongeSpec sponge;
  EdgeOwnership edge_ownership = EdgeOwnership::axis_priority;
  bool exterior_faces = true;  // exterior faces carry modes too

  void validate() const;
};

struct Box {
  Point3 lo{0, 0, 0};
  Point3 hi{0, 0, 0};
  bool contains(const Point3& p) const;
};

struct MediumRegion {
  Box box;
  double c = 1.0;
};

struct MediumModel {
  double background_c = 1.0;
  std::vector<MediumRegion> regions;  // later regions override earlier ones

  void validate() const;
  double contrast() const;
};

// Global node lattice. Index g = ix + Gx*(iy + Gy*iz).
struct GridGeometry {
  Index3 dims{1, 1, 1};
  Point3 h{1, 1, 1};

  int size() const { return dims[0] * dims[1] * dims[2]; }
  int index(int ix, int iy, int iz) const { return ix + dims[0] * (iy + dims[1] * iz); }
  Index3 coords(int g) const;
  Point3 point(int g) const;
  // Nearest node, clamped to the grid.
  int nearest_node(const Point3& p) const;
};

struct SubdomainDesc {
  int id = 0;
  Index3 alpha{0, 0, 0};
  Index3 offset{0, 0, 0};  // global lattice offset of local node (0,0,0)
  Index3 dims{1, 1, 1};
  std::array<int, 6> neighbor{-1, -1, -1, -1, -1, -1};  // per face, -1 if exterior
  std::vector<int> local_to_global;

  int size() const { return dims[0] * dims[1] * dims[2]; }
  int local_index(int lx, int ly, int lz) const { return lx + dims[0] * (ly + dims[1] * lz); }
  bool is_interface(Face f) const { return neighbor[static_cast<int>(f)] >= 0; }
  // Local index of a global node, or -1.
  int find_local(const GridGeometry& grid, int g) const;
};

// Node layer shared by two neighbouring subdomains.
struct InterfaceLayer {
  int lo = 0;  // subdomain on the low side
  int hi = 0;
  int axis = 0;
  std::vector<int> nodes;  // global indices
};

struct DomainPartition {
  DomainSpec spec;
  GridGeometry grid;
  std::vector<SubdomainDesc> subdomains;
  std::vector<InterfaceLayer> interfaces;
  std::vector<std::vector<int>> adjacency;

  int subdomain_index(const Index3& alpha) const;
};

DomainPartition build_partition(const DomainSpec& spec);

// Per global node sound speed.
Vec sample_medium(const MediumModel& medium, const DomainPartition& partition);

// Owned nodes of one face, ordered with the first tangential axis fastest.
struct FaceNodes {
  std::vector<int> nodes;  // local indices
  int d1 = 0;              // extent along the lower tangential axis
  int d2 = 0;              // extent along the higher tangential axis
  bool active = false;     // face carries modes
  bool interface = false;
  int neighbor = -1;
};

struct SubdomainOperator {
  int id = 0;
  Index3 alpha{0, 0, 0};
  Index3 dims{1, 1, 1};
  Point3 h{1, 1, 1};
  SpMat matrix;  // A = -M^{-1/2} C K C M^{-1/2}
  Vec c;         // sound speed per node
  Vec mass;      // dual cell volume fraction per node
  std::array<FaceNodes, 6> faces;

  int size() const { return static_cast<int>(c.size()); }
};

struct BoxOperator {
  SpMat matrix;
  Vec mass;
};

// Finite-volume operator on a box of nodes with mirror closure on every box
// face. Axes with a single node contribute no coupling.
BoxOperator assemble_box_operator(const Index3& dims, const Point3& h, const Vec& c);

// Face ownership for one subdomain, following spec.edge_ownership.
std::array<FaceNodes, 6> owned_face_nodes(const DomainPartition& partition, const SubdomainDesc& sub);

SubdomainOperator assemble_subdomain_operator(const DomainPartition& partition, const SubdomainDesc& sub,
                                              const Vec& c_global);

struct GlobalOperator {
  GridGeometry grid;
  SpMat matrix;
  Vec c;
  Vec mass;
};

GlobalOperator assemble_global_operator(const DomainPartition& partition, const Vec& c_global);

}  // namespace sfv
