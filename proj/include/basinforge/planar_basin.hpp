#pragma once

// Basins of attraction of sinks of planar fields on a disk of radius R:
// inventory of hyperbolic equilibria and periodic orbits, the three-status
// classification of points, stable-manifold exclusion curves through the
// saddles, raster approximations with an explicit margin band, and a
// brute-force oracle for validation.

#include "basinforge/expr.hpp"
#include "basinforge/perturbation.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace basinforge::planar {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Polyline = std::vector<Vec2>;

class NonHyperbolicEquilibrium : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NewtonMiss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NoOrbitInHint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class AmbiguousHint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class SaddleConnectionSuspected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class IncompleteInventory : public std::runtime_error {
public:
    IncompleteInventory(const std::string& what, std::size_t timeouts, std::size_t cells)
        : std::runtime_error(what), timeouts_(timeouts), cells_(cells) {}
    std::size_t timeouts() const { return timeouts_; }
    std::size_t cells() const { return cells_; }

private:
    std::size_t timeouts_, cells_;
};
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};
class FieldFormatError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct BoundaryCheck {
    bool inward = true;
    int violations = 0;
    double max_dot = 0.0;  // max of <f(x), x> over the samples
};

/// C1 vector field on the closed disk of radius R.
class PlanarField {
public:
    using Eval = std::function<Vec2(const Vec2&)>;
    using Jac = std::function<Mat2(const Vec2&)>;

    PlanarField(Eval f, Jac df, double radius, std::string name = {});

    static PlanarField from_expressions(const std::string& fx, const std::string& fy, double radius,
                                        std::string name = {});
    /// Bicubic (Keys cubic convolution) interpolation of samples u, v given
    /// row-major on an nx x ny grid over [x0,x1] x [y0,y1].
    static PlanarField from_table(double x0, double x1, int nx, double y0, double y1, int ny,
                                  std::vector<double> u, std::vector<double> v, double radius,
                                  std::string name = {});

    Vec2 operator()(const Vec2& x) const { return f_(x); }
    Mat2 jacobian(const Vec2& x) const { return df_(x); }
    double radius() const { return radius_; }
    const std::string& name() const { return name_; }

    /// <f(x), x> < 0 on `samples` equally spaced points of the boundary circle.
    BoundaryCheck inward_check(int samples = 360) const;

    PlanarField plus(const PerturbationSpec& p) const;
    PlanarField reversed() const;

private:
    Eval f_;
    Jac df_;
    double radius_;
    std::string name_;
};

enum class EquilibriumKind { Sink, Source, Saddle };
const char* to_string(EquilibriumKind k);

struct EquilibriumBox {
    Vec2 center;       // square centre (the located equilibrium)
    double side = 0.0;
    EquilibriumKind kind = EquilibriumKind::Sink;
    Vec2 equilibrium;
    std::array<std::complex<double>, 2> eigenvalues;
    Vec2 stable_direction = Vec2::Zero();    // saddles: unit eigenvector, negative eigenvalue
    Vec2 unstable_direction = Vec2::Zero();  // saddles: unit eigenvector, positive eigenvalue
    /// Sinks: forward-invariant core {e^T P e <= level} inside the ball of
    /// radius side/2, with P solving A^T P + P A = -I.
    Mat2 lyapunov = Mat2::Zero();
    double level = 0.0;

    bool in_square(const Vec2& x) const { return (x - center).cwiseAbs().maxCoeff() <= side / 2; }
    bool in_core(const Vec2& x) const {
        const Vec2 e = x - equilibrium;
        return e.dot(lyapunov * e) < level;
    }
};

struct PeriodicHint {
    Vec2 center = Vec2::Zero();
    double r_inner = 0.0;
    double r_outer = 0.0;
    double angle = 0.0;  // direction of the radial Poincare section
};

enum class OrbitKind { Attracting, Repelling };
const char* to_string(OrbitKind k);

struct PeriodicAnnulus {
    OrbitKind kind = OrbitKind::Attracting;
    Polyline orbit;
    Polyline inner;  // IB, closed (last vertex joins the first)
    Polyline outer;  // OB
    double margin = 0.0;      // min distance between IB and OB
    double multiplier = 0.0;  // derivative of the forward return map
    double period = 0.0;
    double section_radius = 0.0;
    PeriodicHint hint;

    /// Between IB and OB.
    bool contains(const Vec2& x) const;
};

struct Inventory {
    std::vector<EquilibriumBox> equilibria;
    std::vector<PeriodicAnnulus> annuli;

    /// Psi_N: number of sinks.
    int num_sinks() const;
    /// The i-th sink box, 1-based in inventory order.
    const EquilibriumBox& sink(int i) const;
    std::vector<const EquilibriumBox*> sinks() const;
    std::vector<const EquilibriumBox*> saddles() const;
    /// Inside a source box or a repelling annulus (the excluded set C_B).
    bool in_excluded(const Vec2& x) const;
};

/// Multi-start Newton from a seed_resolution x seed_resolution grid over the
/// disk, deduplicated and classified; boxes have side < 1/k. Throws
/// NonHyperbolicEquilibrium when |Re eig| <= 1e-6, NewtonMiss when the
/// indices do not add up to the winding number of f along the boundary.
std::vector<EquilibriumBox> find_equilibria(const PlanarField& field, int seed_resolution, int k = 8);

/// Winding number of f along the boundary circle.
int boundary_winding_number(const PlanarField& field, int samples = 4096);

std::vector<PeriodicAnnulus> locate_periodic_annuli(const PlanarField& field,
                                                    const std::vector<PeriodicHint>& hints, int k = 8);

/// Sampled forward invariance. Sinks: the flow points into the Lyapunov core on
/// its boundary ellipse. Annuli: the flow crosses the closing section segments
/// of IB and OB towards the orbit (for repelling annuli, in reversed time);
/// the remaining boundary arcs are trajectory pieces.
bool check_invariance(const PlanarField& field, const EquilibriumBox& sink, int samples = 64);
bool check_invariance(const PlanarField& field, const PeriodicAnnulus& annulus, int samples = 64);

Inventory build_inventory(const PlanarField& field, const std::vector<PeriodicHint>& hints, int k = 8,
                          int seed_resolution = 24);

enum class Status { I, II, III, Exited, Timeout };
const char* to_string(Status s);

struct Classification {
    Status status = Status::Timeout;
    int index = 0;  // sink index for I/II, annulus index (1-based) for III
    double time = 0.0;
};

/// Integrates forward and halts at the first integer time where the state is
/// in the target sink's core (I), another sink's core (II), or an attracting
/// annulus (III); Exited when the trajectory leaves the disk. target_sink 0
/// means no target (every sink reports II).
Classification classify_point(const Vec2& x, const Inventory& inventory, const PlanarField& field,
                              double T_max, int target_sink, double tol = 1e-8);

/// Backward orbits of saddle +- h v_s joined through the saddle; stops at the
/// disk boundary, inside C_B, or after time T.
Polyline stable_manifold_curve(const EquilibriumBox& saddle, const PlanarField& field, double T,
                               const Inventory* inventory = nullptr, double h = 1e-4);

// ---- rasters ---------------------------------------------------------------

namespace label {
constexpr std::uint8_t Outside = 0;
constexpr std::uint8_t Excluded = 1;
constexpr std::uint8_t Margin = 2;
constexpr std::uint8_t Unknown = 3;  // timeout
constexpr std::uint8_t Exited = 4;
constexpr std::uint8_t SinkBase = 10;    // 10 + j for sink j
constexpr std::uint8_t CycleBase = 100;  // 100 + i for attracting annulus i
}  // namespace label

/// 2^l x 2^l cells over [-R, R]^2; row 0 is the top (largest y).
struct Raster {
    int l = 0;
    int n = 0;
    double R = 0.0;
    std::vector<std::uint8_t> labels;

    Raster() = default;
    Raster(int l, double R);
    double cell() const { return 2 * R / n; }
    Vec2 center(int i, int j) const { return {-R + (i + 0.5) * cell(), R - (j + 0.5) * cell()}; }
    std::uint8_t& at(int i, int j) { return labels[static_cast<std::size_t>(j) * n + i]; }
    std::uint8_t at(int i, int j) const { return labels[static_cast<std::size_t>(j) * n + i]; }
    std::size_t count(std::uint8_t code) const;
};

/// Smallest l with 2R / 2^l <= 1/(4k).
int default_level(double R, int k);

struct BasinOptions {
    int l = 0;             // 0: default_level
    double T_max = 200.0;  // per-cell integration budget
    int threads = 0;       // 0: BASIN_FORGE_THREADS or all cores
    double tol = 1e-8;
    double timeout_fraction = 1e-3;
};

struct BasinResult {
    Raster raster;
    std::vector<Polyline> gammas;
    std::size_t classified = 0, timeouts = 0, exited = 0, margin = 0, excluded = 0;
    int target_code = 0;
};

/// Raster approximation of the basin of the target sink (1-based). Cells in
/// C_B are Excluded; cells within 1/k of a stable-manifold curve or of C_B are
/// Margin; every other cell in the disk is classified. Throws
/// IncompleteInventory when timeouts exceed 0.1% of the classified cells
/// (the raster is attached to the exception's message only).
BasinResult compute_basin(const PlanarField& field, const Inventory& inventory, int target_sink, int k,
                          const BasinOptions& options = {});

/// Oracle: integrate every cell centre for time T and label by the nearest
/// listed sink (or cycle) within `snap`; Exited when leaving the disk.
Raster brute_force_classify(const PlanarField& field, int l, double T, const std::vector<Vec2>& sinks,
                            const std::vector<Polyline>& cycles = {}, double snap = 0.05, int threads = 0);

/// Symmetric Hausdorff distance between {cells of a in set} and {cells of b
/// in set}, measured between cell centres. Exact over the grid.
double hausdorff(const Raster& a, const Raster& b, const std::function<bool(std::uint8_t)>& in_set);
/// Complement of the target basin inside the disk.
std::function<bool(std::uint8_t)> complement_of(int target_code);

/// Fraction of cells classified in both rasters (inside the disk, not Margin or
/// Excluded in a) on which the labels agree.
double agreement(const Raster& a, const Raster& b);

/// Distance from x to a polyline (open unless `closed`).
double distance_to_polyline(const Vec2& x, const Polyline& p, bool closed = false);

int worker_count(int requested);

// ---- I/O -------------------------------------------------------------------

void write_pgm(std::ostream& out, const Raster& r);
Raster read_pgm(std::istream& in, double R);
std::string legend_json(const Raster& r, const Inventory& inv, int target_sink);
void write_polylines_csv(std::ostream& out, const std::vector<Polyline>& curves);
void write_annuli_csv(std::ostream& out, const std::vector<PeriodicAnnulus>& annuli);

/// Field manifest: {"name", "radius", "f": [fx, fy] | "table": {...},
/// "hints": [{"center":[x,y], "r_inner", "r_outer", "angle"}], "sinks": [[x,y],...]}
struct FieldManifest {
    PlanarField field;
    std::vector<PeriodicHint> hints;
    std::vector<Vec2> sinks;  // optional reference sinks (oracle input)
    double T_max = 200.0;
};
FieldManifest load_field_manifest(const std::string& text);
FieldManifest load_field_manifest_file(const std::string& path);

}  // namespace basinforge::planar
