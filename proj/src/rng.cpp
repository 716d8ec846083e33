#include "iplt/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "iplt/common.hpp"

namespace iplt {

namespace {
bool g_checked = false;
}

bool checked_mode() { return g_checked; }
void set_checked_mode(bool on) { g_checked = on; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller on open-interval uniforms; u is kept away from zero so the
    // log is finite.
    double u = 0.0;
    do {
        u = uniform01();
    } while (u <= 0.0);
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw Error("Rng::below requires n > 0");
    }
    // Lemire's multiply-shift rejection method; unbiased and fixed-order.
    while (true) {
        const std::uint64_t x = next_u64();
        const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        const std::uint64_t low = static_cast<std::uint64_t>(m);
        if (low >= n) {
            return static_cast<std::uint64_t>(m >> 64);
        }
        const std::uint64_t threshold = (0 - n) % n;
        if (low >= threshold) {
            return static_cast<std::uint64_t>(m >> 64);
        }
    }
}

std::string Rng::serialize() const {
    std::ostringstream out;
    out << seed_ << ' ' << engine_ << ' ' << (has_spare_ ? 1 : 0);
    if (has_spare_) {
        // Spare is stored as raw bits for an exact round trip.
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        out << ' ' << bits;
    }
    return out.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream in(state);
    int spare_flag = 0;
    if (!(in >> seed_ >> engine_ >> spare_flag)) {
        throw Error("malformed RNG state");
    }
    has_spare_ = spare_flag != 0;
    spare_ = 0.0;
    if (has_spare_) {
        std::uint64_t bits = 0;
        if (!(in >> bits)) {
            throw Error("malformed RNG state (missing spare)");
        }
        std::memcpy(&spare_, &bits, sizeof(spare_));
    }
}

}  // namespace iplt
