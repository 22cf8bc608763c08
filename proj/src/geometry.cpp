#include "glocnav/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace glocnav {

Pose px_to_world(const Pose& p, const FloorPlan& plan) {
    if (p.frame != Frame::PIXEL)
        throw std::invalid_argument("px_to_world expects a PIXEL pose");
    if (p.x < -0.5 || p.y < -0.5 || p.x > plan.width - 0.5 || p.y > plan.height - 0.5)
        throw BoundsError("pixel pose outside plan bounds");
    return Pose(plan.resolution_mu * p.x + plan.offset_x,
                plan.resolution_mu * p.y + plan.offset_y, p.heading, Frame::WORLD);
}

Pose world_to_px(const Pose& p, const FloorPlan& plan, bool rasterize) {
    if (p.frame != Frame::WORLD)
        throw std::invalid_argument("world_to_px expects a WORLD pose");
    double px = (p.x - plan.offset_x) / plan.resolution_mu;
    double py = (p.y - plan.offset_y) / plan.resolution_mu;
    if (rasterize) {
        px = std::round(px);
        py = std::round(py);
        if (px < 0 || py < 0 || px >= plan.width || py >= plan.height)
            throw BoundsError("world pose maps outside plan grid");
    }
    return Pose(px, py, p.heading, Frame::PIXEL);
}

Cell world_to_cell(Vec2 world_pos, const FloorPlan& plan) {
    Pose p = world_to_px(Pose(world_pos.x, world_pos.y, 0.0, Frame::WORLD), plan, true);
    return Cell{static_cast<int>(p.x), static_cast<int>(p.y)};
}

Vec2 cell_to_world(const Cell& c, const FloorPlan& plan) {
    return {plan.resolution_mu * c.x + plan.offset_x,
            plan.resolution_mu * c.y + plan.offset_y};
}

Vec2 world_to_agent(Vec2 point, const Pose& origin) {
    if (origin.frame != Frame::WORLD)
        throw std::invalid_argument("world_to_agent expects a WORLD origin");
    double dx = point.x - origin.x;
    double dy = point.y - origin.y;
    double c = std::cos(origin.heading);
    double s = std::sin(origin.heading);
    // Row vector times R = [[c,-s],[s,c]].
    return {dx * c + dy * s, -dx * s + dy * c};
}

std::vector<Vec2> world_to_agent(const std::vector<Vec2>& points, const Pose& origin) {
    std::vector<Vec2> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(world_to_agent(p, origin));
    return out;
}

Vec2 agent_to_world(Vec2 point, const Pose& origin) {
    double c = std::cos(origin.heading);
    double s = std::sin(origin.heading);
    return {origin.x + point.x * c - point.y * s,
            origin.y + point.x * s + point.y * c};
}

std::vector<Cell> supercover_cells(Vec2 a, Vec2 b, const FloorPlan& plan) {
    // Cell (i,j) covers [i-0.5, i+0.5) x [j-0.5, j+0.5). Shift by +0.5 so cell
    // boundaries sit at integers and run a standard Amanatides-Woo traversal.
    std::vector<Cell> cells;
    double ax = a.x + 0.5, ay = a.y + 0.5;
    double bx = b.x + 0.5, by = b.y + 0.5;
    int cx = static_cast<int>(std::floor(ax));
    int cy = static_cast<int>(std::floor(ay));
    int ex = static_cast<int>(std::floor(bx));
    int ey = static_cast<int>(std::floor(by));
    double dx = bx - ax, dy = by - ay;
    int sx = dx > 0 ? 1 : -1;
    int sy = dy > 0 ? 1 : -1;
    double t_max_x, t_delta_x, t_max_y, t_delta_y;
    if (dx == 0.0) {
        t_max_x = std::numeric_limits<double>::infinity();
        t_delta_x = std::numeric_limits<double>::infinity();
    } else {
        double next_x = sx > 0 ? std::floor(ax) + 1.0 : std::floor(ax);
        // Degenerate: starting exactly on a boundary moving negative.
        if (sx < 0 && next_x == ax) next_x -= 1.0;
        t_max_x = (next_x - ax) / dx;
        t_delta_x = std::abs(1.0 / dx);
    }
    if (dy == 0.0) {
        t_max_y = std::numeric_limits<double>::infinity();
        t_delta_y = std::numeric_limits<double>::infinity();
    } else {
        double next_y = sy > 0 ? std::floor(ay) + 1.0 : std::floor(ay);
        if (sy < 0 && next_y == ay) next_y -= 1.0;
        t_max_y = (next_y - ay) / dy;
        t_delta_y = std::abs(1.0 / dy);
    }
    cells.push_back({cx, cy});
    int guard = 4 * (plan.width + plan.height) + 8;
    while ((cx != ex || cy != ey) && guard-- > 0) {
        if (t_max_x < t_max_y) {
            cx += sx;
            t_max_x += t_delta_x;
        } else if (t_max_y < t_max_x) {
            cy += sy;
            t_max_y += t_delta_y;
        } else {
            // Exact corner crossing: supercover includes both side cells.
            cells.push_back({cx + sx, cy});
            cells.push_back({cx, cy + sy});
            cx += sx;
            cy += sy;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        cells.push_back({cx, cy});
    }
    return cells;
}

bool segment_traversable_px(Vec2 a, Vec2 b, const FloorPlan& plan) {
    for (const Cell& c : supercover_cells(a, b, plan)) {
        if (!plan.in_bounds(c) || plan.occupied(c)) return false;
    }
    return true;
}

bool segment_traversable(const Pose& a, const Pose& b, const FloorPlan& plan) {
    if (a.frame != Frame::PIXEL || b.frame != Frame::PIXEL)
        throw std::invalid_argument("segment_traversable expects PIXEL poses");
    if (!plan.in_bounds(static_cast<int>(std::round(a.x)), static_cast<int>(std::round(a.y))) ||
        !plan.in_bounds(static_cast<int>(std::round(b.x)), static_cast<int>(std::round(b.y))))
        throw BoundsError("segment endpoint outside plan bounds");
    return segment_traversable_px({a.x, a.y}, {b.x, b.y}, plan);
}

FloorPlan inflate(const FloorPlan& plan, int radius_cells) {
    FloorPlan out = plan;
    if (radius_cells <= 0) return out;
    int r2 = radius_cells * radius_cells;
    for (int y = 0; y < plan.height; ++y) {
        for (int x = 0; x < plan.width; ++x) {
            if (!plan.occupied(x, y)) continue;
            for (int oy = -radius_cells; oy <= radius_cells; ++oy) {
                for (int ox = -radius_cells; ox <= radius_cells; ++ox) {
                    if (ox * ox + oy * oy > r2) continue;
                    int nx = x + ox, ny = y + oy;
                    if (out.in_bounds(nx, ny)) out.set_occupied(nx, ny, true);
                }
            }
        }
    }
    return out;
}

void save_pgm(const std::vector<std::uint8_t>& gray, int w, int h, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

std::vector<std::uint8_t> load_pgm(const std::string& path, int& w, int& h) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw std::runtime_error(path + ": not a binary PGM");
    auto next_int = [&f, &path]() {
        // Skip whitespace and '#' comment lines.
        int c = f.get();
        while (c != EOF && (std::isspace(c) || c == '#')) {
            if (c == '#') {
                while (c != EOF && c != '\n') c = f.get();
            }
            c = f.get();
        }
        std::string tok;
        while (c != EOF && !std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            c = f.get();
        }
        if (tok.empty()) throw std::runtime_error(path + ": truncated PGM header");
        return std::stoi(tok);
    };
    w = next_int();
    h = next_int();
    int maxval = next_int();
    if (maxval != 255) throw std::runtime_error(path + ": only 8-bit PGM supported");
    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error(path + ": truncated PGM payload");
    return data;
}

void save_plan(const FloorPlan& plan, const std::string& image_path,
               const std::string& meta_path) {
    std::vector<std::uint8_t> gray(plan.cell_count());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = plan.grid[i] ? 0 : 255;
    save_pgm(gray, plan.width, plan.height, image_path);
    std::ofstream m(meta_path);
    if (!m) throw std::runtime_error("cannot write " + meta_path);
    char buf[96];
    std::snprintf(buf, sizeof buf, "resolution_m_per_px = %.17g\n", plan.resolution_mu);
    m << buf;
    std::snprintf(buf, sizeof buf, "offset_x_m = %.17g\n", plan.offset_x);
    m << buf;
    std::snprintf(buf, sizeof buf, "offset_y_m = %.17g\n", plan.offset_y);
    m << buf;
}

FloorPlan load_plan(const std::string& image_path, const std::string& meta_path) {
    int w = 0, h = 0;
    std::vector<std::uint8_t> gray = load_pgm(image_path, w, h);
    double mu = 0.0, dx = 0.0, dy = 0.0;
    std::ifstream m(meta_path);
    if (!m) throw std::runtime_error("cannot read " + meta_path);
    std::string line;
    while (std::getline(m, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        double val = std::stod(trim(line.substr(eq + 1)));
        if (key == "resolution_m_per_px") mu = val;
        else if (key == "offset_x_m") dx = val;
        else if (key == "offset_y_m") dy = val;
    }
    if (mu <= 0.0) throw std::runtime_error(meta_path + ": missing resolution_m_per_px");
    FloorPlan plan(w, h, mu, dx, dy);
    for (std::size_t i = 0; i < gray.size(); ++i)
        plan.grid[i] = gray[i] < 128 ? 1 : 0;
    return plan;
}

}  // namespace glocnav
