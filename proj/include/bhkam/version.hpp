#ifndef BHKAM_VERSION_HPP
#define BHKAM_VERSION_HPP

namespace bhkam {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bhkam

#endif  // BHKAM_VERSION_HPP
