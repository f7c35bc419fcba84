#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace regddm {

// Bijections from the unconstrained sampling scale to each parameter's
// domain.  log for positive quantities, logistic for (0,1).
enum class Transform { identity, log_pos, logit };

inline double constrain_value(Transform t, double u) {
  switch (t) {
    case Transform::identity: return u;
    case Transform::log_pos: return std::exp(u);
    case Transform::logit: return 1.0 / (1.0 + std::exp(-u));
  }
  return u;
}

inline double unconstrain_value(Transform t, double c) {
  switch (t) {
    case Transform::identity: return c;
    case Transform::log_pos:
      if (!(c > 0.0)) throw std::domain_error("unconstrain: value must be positive");
      return std::log(c);
    case Transform::logit:
      if (!(c > 0.0 && c < 1.0)) throw std::domain_error("unconstrain: value must be in (0,1)");
      return std::log(c / (1.0 - c));
  }
  return c;
}

// Contiguous named block of a flat parameter vector.
struct Block {
  std::string name;
  int offset = 0;
  int size = 1;
  Transform transform = Transform::identity;
  std::vector<std::string> element_names;  // size() == size when size > 1
};

struct ParamLayout {
  std::vector<Block> blocks;
  int total = 0;

  int add(const std::string& name, Transform t) {
    blocks.push_back({name, total, 1, t, {}});
    total += 1;
    return static_cast<int>(blocks.size()) - 1;
  }

  int add_vector(const std::string& name, std::vector<std::string> element_names, Transform t) {
    const int size = static_cast<int>(element_names.size());
    blocks.push_back({name, total, size, t, std::move(element_names)});
    total += size;
    return static_cast<int>(blocks.size()) - 1;
  }

  const Block& operator[](int i) const { return blocks[static_cast<std::size_t>(i)]; }

  const Block* find(const std::string& name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }

  std::vector<std::string> flat_names() const {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(total));
    for (const auto& b : blocks) {
      if (b.element_names.empty()) {
        out.push_back(b.name);
      } else {
        for (const auto& n : b.element_names) out.push_back(n);
      }
    }
    return out;
  }

  void constrain(const std::vector<double>& u, std::vector<double>& c) const {
    c.resize(u.size());
    for (const auto& b : blocks) {
      for (int i = 0; i < b.size; ++i) {
        c[static_cast<std::size_t>(b.offset + i)] =
            constrain_value(b.transform, u[static_cast<std::size_t>(b.offset + i)]);
      }
    }
  }

  void unconstrain(const std::vector<double>& c, std::vector<double>& u) const {
    u.resize(c.size());
    for (const auto& b : blocks) {
      for (int i = 0; i < b.size; ++i) {
        u[static_cast<std::size_t>(b.offset + i)] =
            unconstrain_value(b.transform, c[static_cast<std::size_t>(b.offset + i)]);
      }
    }
  }
};

}  // namespace regddm
