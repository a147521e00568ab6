#include "skatepose/rng.hpp"

#include "skatepose/error.hpp"

#include <bit>
#include <sstream>

namespace skatepose {

// The engine's textual state is specified by the standard, so it round-trips
// across implementations. The cached Box-Muller deviate is appended.
std::string Rng::state() const {
    std::ostringstream out;
    out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::bit_cast<std::uint64_t>(spare_);
    return out.str();
}

void Rng::set_state(const std::string& state) {
    std::istringstream in(state);
    std::mt19937_64 engine;
    int has_spare = 0;
    std::uint64_t spare_bits = 0;
    in >> engine >> has_spare >> spare_bits;
    if (in.fail()) fail(ErrorKind::Parse, "malformed random state");
    engine_ = engine;
    has_spare_ = has_spare != 0;
    spare_ = std::bit_cast<double>(spare_bits);
}

}  // namespace skatepose
