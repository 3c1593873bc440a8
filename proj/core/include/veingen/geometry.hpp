#pragma once

#include <cmath>

namespace veingen {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    bool contains(Vec2 p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }
};

// Row-major 2x3 affine map: p' = {a*x + b*y + tx, c*x + d*y + ty}.
struct Affine {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    Vec2 apply(Vec2 p) const {
        return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty};
    }

    // this ∘ other (other applied first).
    Affine compose(const Affine& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, a * o.tx + b * o.ty + tx,
                c * o.a + d * o.c, c * o.b + d * o.d, c * o.tx + d * o.ty + ty};
    }

    Affine inverse() const {
        const double det = a * d - b * c;
        const double ia = d / det, ib = -b / det;
        const double ic = -c / det, id = a / det;
        return {ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)};
    }

    static Affine identity() { return {}; }
    static Affine translation(double dx, double dy) {
        return {1.0, 0.0, dx, 0.0, 1.0, dy};
    }
    static Affine scaling(double sx, double sy, Vec2 center) {
        return {sx, 0.0, center.x * (1.0 - sx), 0.0, sy, center.y * (1.0 - sy)};
    }
    // Angle in radians, positive rotating +x toward +y.
    static Affine rotation(double angle, Vec2 center) {
        const double co = std::cos(angle), si = std::sin(angle);
        return {co, -si, center.x - co * center.x + si * center.y,
                si, co,  center.y - si * center.x - co * center.y};
    }
};

inline double deg_to_rad(double deg) { return deg * 0.017453292519943295; }

} // namespace veingen
