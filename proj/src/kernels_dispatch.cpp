#include "gti/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace gti::kernels {
namespace {

struct Entry {
    const char* name;
    const Ops* ops;
};

std::vector<Entry> enumerate() {
    std::vector<Entry> out;
    out.push_back({"scalar", &scalar_ops()});
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        out.push_back({"avx2", &avx2_ops()});
#endif
#if defined(__ARM_NEON)
    out.push_back({"neon", &neon_ops()});
#endif
    return out;
}

struct Active {
    const Ops* ops;
    std::string name;
};

Active& state() {
    static Active a = [] {
        auto entries = enumerate();
        Entry chosen = entries.back(); // widest available
        if (const char* env = std::getenv("GTI_KERNELS")) {
            bool found = false;
            for (const auto& e : entries)
                if (e.name == std::string_view(env)) {
                    chosen = e;
                    found = true;
                }
            if (!found) throw std::invalid_argument("GTI_KERNELS: unknown kernel variant: " + std::string(env));
        }
        return Active{chosen.ops, chosen.name};
    }();
    return a;
}

} // namespace

std::vector<std::string> available() {
    std::vector<std::string> names;
    for (const auto& e : enumerate()) names.emplace_back(e.name);
    return names;
}

const Ops& active() { return *state().ops; }

std::string_view active_name() { return state().name; }

void select(std::string_view name) {
    for (const auto& e : enumerate())
        if (name == e.name) {
            state() = {e.ops, std::string(name)};
            return;
        }
    throw std::invalid_argument("unknown kernel variant: " + std::string(name));
}

} // namespace gti::kernels
