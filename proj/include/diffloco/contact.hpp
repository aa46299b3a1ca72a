#pragma once

#include "diffloco/core.hpp"

namespace diffloco {

enum class ContactKind { Sticky, Coulomb, Frictionless };

struct ContactModel {
    ContactKind kind = ContactKind::Sticky;
    double mu = 0.4; // Coulomb only
};

/// Ground projection of a velocity against the horizontal floor (normal +y).
///
/// Every branch is linear and homogeneous in v, so the projected velocity is
/// exactly `jacobian * v`; the forward pass picks the branch and the reverse pass
/// differentiates that branch. Boundary ties go to the sticking branch.
struct ContactProjection {
    Vec2 v;
    Mat2 jacobian;
};

inline ContactProjection project_contact(const Vec2& v, const ContactModel& model) {
    Mat2 J = Mat2::Zero();
    const double vt = v.x();
    const double vn = v.y();
    switch (model.kind) {
    case ContactKind::Sticky:
        // only upward vertical motion survives
        if (vn > 0.0) J(1, 1) = 1.0;
        break;
    case ContactKind::Frictionless:
        J(0, 0) = 1.0;
        if (vn > 0.0) J(1, 1) = 1.0;
        break;
    case ContactKind::Coulomb:
        if (vn >= 0.0) {
            J.setIdentity();
        } else if (std::abs(vt) > model.mu * -vn) {
            // slip: tangential speed loses mu * normal impulse
            const double sgn = vt > 0.0 ? 1.0 : -1.0;
            J(0, 0) = 1.0;
            J(0, 1) = sgn * model.mu;
        }
        break;
    }
    return {J * v, J};
}

} // namespace diffloco
