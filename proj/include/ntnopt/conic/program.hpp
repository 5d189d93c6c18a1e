#pragma once

#include <Eigen/Dense>
#include <complex>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ntnopt/conic/expr.hpp"

namespace ntnopt::conic {

/// expr == 0
struct EqCon {
  LinExpr e;
};
/// expr >= 0
struct IneqCon {
  LinExpr e;
};
/// e[0] >= || (e[1], ..., e[k]) ||_2
struct SocCon {
  std::vector<LinExpr> e;
};
/// 2*a*b >= ||w||^2, a >= 0, b >= 0
struct RsocCon {
  LinExpr a, b;
  std::vector<LinExpr> w;
};
/// Symmetric matrix of affine entries is PSD; lower triangle row-major.
struct PsdCon {
  int dim = 0;
  std::vector<LinExpr> lower;  // size dim*(dim+1)/2, entry (i,j) at i*(i+1)/2+j
};
/// (x, y, z) in closure{ y > 0, z >= y*exp(x/y) }
struct ExpCon {
  LinExpr x, y, z;
};

using Constraint =
    std::variant<EqCon, IneqCon, SocCon, RsocCon, PsdCon, ExpCon>;

/// Solver-agnostic conic program: declared variables, a linear objective to
/// minimize, and a list of conic constraints. Construction is append-only;
/// solving lives in solver.hpp behind a pluggable backend interface.
class ConicProgram {
 public:
  int add_var(std::string name = std::string()) {
    names_.push_back(std::move(name));
    return static_cast<int>(names_.size()) - 1;
  }

  std::vector<int> add_vars(const std::string& base, int count) {
    std::vector<int> idx(count);
    for (int i = 0; i < count; ++i)
      idx[i] = add_var(base + "[" + std::to_string(i) + "]");
    return idx;
  }

  void minimize(LinExpr objective) { objective_ = std::move(objective); }

  void add_eq(LinExpr e) { push(EqCon{std::move(e)}); }
  void add_ineq(LinExpr e) { push(IneqCon{std::move(e)}); }

  void add_soc(std::vector<LinExpr> e) {
    if (e.size() < 2) throw std::invalid_argument("soc needs >= 2 rows");
    push(SocCon{std::move(e)});
  }

  void add_rsoc(LinExpr a, LinExpr b, std::vector<LinExpr> w) {
    if (w.empty()) throw std::invalid_argument("rsoc needs >= 1 member");
    push(RsocCon{std::move(a), std::move(b), std::move(w)});
  }

  /// entries: full dim x dim row-major, assumed symmetric; symmetric pairs
  /// are averaged so the stored block is exactly symmetric.
  void add_psd(int dim, const std::vector<LinExpr>& entries) {
    if (static_cast<int>(entries.size()) != dim * dim)
      throw std::invalid_argument("psd entries size != dim^2");
    PsdCon c;
    c.dim = dim;
    c.lower.reserve(dim * (dim + 1) / 2);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j)
        c.lower.push_back((entries[i * dim + j] + entries[j * dim + i]) * 0.5);
    push(std::move(c));
  }

  void add_expcone(LinExpr x, LinExpr y, LinExpr z) {
    push(ExpCon{std::move(x), std::move(y), std::move(z)});
  }

  int num_vars() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& var_names() const { return names_; }
  const LinExpr& objective() const { return objective_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }

  /// Textual dump, both a debugging aid and the serialization format
  /// understood by parse().
  void dump(std::ostream& os) const {
    os << std::setprecision(17);
    os << "conic_program v1\n";
    os << "vars " << num_vars() << "\n";
    for (int i = 0; i < num_vars(); ++i)
      os << "var " << i << " " << (names_[i].empty() ? "_" : names_[i])
         << "\n";
    os << "minimize ";
    dump_expr(os, objective_);
    os << "\n";
    for (const auto& c : constraints_) {
      std::visit(
          [&](const auto& con) {
            using T = std::decay_t<decltype(con)>;
            if constexpr (std::is_same_v<T, EqCon>) {
              os << "eq ";
              dump_expr(os, con.e);
            } else if constexpr (std::is_same_v<T, IneqCon>) {
              os << "ineq ";
              dump_expr(os, con.e);
            } else if constexpr (std::is_same_v<T, SocCon>) {
              os << "soc " << con.e.size();
              for (const auto& e : con.e) {
                os << " ; ";
                dump_expr(os, e);
              }
            } else if constexpr (std::is_same_v<T, RsocCon>) {
              os << "rsoc " << con.w.size() << " ; ";
              dump_expr(os, con.a);
              os << " ; ";
              dump_expr(os, con.b);
              for (const auto& e : con.w) {
                os << " ; ";
                dump_expr(os, e);
              }
            } else if constexpr (std::is_same_v<T, PsdCon>) {
              os << "psd " << con.dim;
              for (const auto& e : con.lower) {
                os << " ; ";
                dump_expr(os, e);
              }
            } else if constexpr (std::is_same_v<T, ExpCon>) {
              os << "exp ; ";
              dump_expr(os, con.x);
              os << " ; ";
              dump_expr(os, con.y);
              os << " ; ";
              dump_expr(os, con.z);
            }
          },
          c);
      os << "\n";
    }
    os << "end\n";
  }

  std::string dump() const {
    std::ostringstream ss;
    dump(ss);
    return ss.str();
  }

  static ConicProgram parse(std::istream& is) {
    ConicProgram p;
    std::string line;
    if (!std::getline(is, line) || line.rfind("conic_program", 0) != 0)
      throw std::invalid_argument("bad header in conic program dump");
    int nvars = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "end") break;
      if (tag == "vars") {
        ls >> nvars;
        p.names_.assign(nvars, std::string());
      } else if (tag == "var") {
        int idx;
        std::string name;
        ls >> idx >> name;
        if (idx < 0 || idx >= nvars)
          throw std::invalid_argument("var index out of range in dump");
        p.names_[idx] = (name == "_") ? std::string() : name;
      } else if (tag == "minimize") {
        p.objective_ = parse_expr(ls);
      } else if (tag == "eq") {
        p.add_eq(parse_expr(ls));
      } else if (tag == "ineq") {
        p.add_ineq(parse_expr(ls));
      } else if (tag == "soc") {
        std::size_t k;
        ls >> k;
        auto parts = parse_expr_list(ls, k);
        p.add_soc(std::move(parts));
      } else if (tag == "rsoc") {
        std::size_t k;
        ls >> k;
        auto parts = parse_expr_list(ls, k + 2);
        std::vector<LinExpr> w(parts.begin() + 2, parts.end());
        p.add_rsoc(parts[0], parts[1], std::move(w));
      } else if (tag == "psd") {
        int dim;
        ls >> dim;
        auto parts = parse_expr_list(ls, dim * (dim + 1) / 2);
        PsdCon c;
        c.dim = dim;
        c.lower = std::move(parts);
        p.push(std::move(c));
      } else if (tag == "exp") {
        auto parts = parse_expr_list(ls, 3);
        p.add_expcone(parts[0], parts[1], parts[2]);
      } else {
        throw std::invalid_argument("unknown tag in conic dump: " + tag);
      }
    }
    return p;
  }

  static ConicProgram parse(const std::string& text) {
    std::istringstream ss(text);
    return parse(ss);
  }

 private:
  void push(Constraint c) {
    check_indices(c);
    constraints_.push_back(std::move(c));
  }

  void check_indices(const Constraint& c) const {
    auto check = [&](const LinExpr& e) {
      if (e.max_var_index() >= num_vars())
        throw std::invalid_argument("constraint references undeclared variable");
    };
    std::visit(
        [&](const auto& con) {
          using T = std::decay_t<decltype(con)>;
          if constexpr (std::is_same_v<T, EqCon>) check(con.e);
          else if constexpr (std::is_same_v<T, IneqCon>) check(con.e);
          else if constexpr (std::is_same_v<T, SocCon>)
            for (const auto& e : con.e) check(e);
          else if constexpr (std::is_same_v<T, RsocCon>) {
            check(con.a);
            check(con.b);
            for (const auto& e : con.w) check(e);
          } else if constexpr (std::is_same_v<T, PsdCon>)
            for (const auto& e : con.lower) check(e);
          else if constexpr (std::is_same_v<T, ExpCon>) {
            check(con.x);
            check(con.y);
            check(con.z);
          }
        },
        c);
  }

  static void dump_expr(std::ostream& os, const LinExpr& e) {
    os << "E " << e.coefficients().size() << " " << e.constant();
    for (const auto& [i, v] : e.coefficients()) os << " " << i << " " << v;
  }

  static LinExpr parse_expr(std::istream& is) {
    std::string tag;
    is >> tag;
    if (tag != "E") throw std::invalid_argument("expected expression tag E");
    std::size_t n;
    double c0;
    is >> n >> c0;
    LinExpr e(c0);
    for (std::size_t t = 0; t < n; ++t) {
      int idx;
      double v;
      is >> idx >> v;
      e += LinExpr::variable(idx, v);
    }
    return e;
  }

  static std::vector<LinExpr> parse_expr_list(std::istream& is,
                                              std::size_t count) {
    std::vector<LinExpr> out;
    out.reserve(count);
    std::string sep;
    for (std::size_t t = 0; t < count; ++t) {
      is >> sep;  // ';'
      if (sep != ";")
        throw std::invalid_argument("expected ';' between expressions");
      out.push_back(parse_expr(is));
    }
    return out;
  }

  std::vector<std::string> names_;
  LinExpr objective_;
  std::vector<Constraint> constraints_;
};

/// Real embedding [[X, -Y], [Y, X]] of a Hermitian H = X + iY. The embedding
/// is PSD iff H is, and every eigenvalue of H appears twice, so traces and
/// objective terms built on the embedding double (callers scale by 1/2).
inline Eigen::MatrixXd embed_hermitian(const Eigen::MatrixXcd& H) {
  const auto M = H.rows();
  if (H.cols() != M) throw std::invalid_argument("embed_hermitian: not square");
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::invalid_argument("embed_hermitian: matrix is not Hermitian");
  Eigen::MatrixXd E(2 * M, 2 * M);
  const Eigen::MatrixXd X = H.real();
  const Eigen::MatrixXd Y = H.imag();
  E.topLeftCorner(M, M) = X;
  E.topRightCorner(M, M) = -Y;
  E.bottomLeftCorner(M, M) = Y;
  E.bottomRightCorner(M, M) = X;
  return E;
}

}  // namespace ntnopt::conic
