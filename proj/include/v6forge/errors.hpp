#pragma once

#include <stdexcept>
#include <string>

namespace v6forge {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define V6FORGE_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what)  \
        : Error(#Name ": " + what) {}       \
  }

// addr6
V6FORGE_DEFINE_ERROR(MalformedAddress);

// seedclass
V6FORGE_DEFINE_ERROR(EmptySet);
V6FORGE_DEFINE_ERROR(BadRange);
V6FORGE_DEFINE_ERROR(TooFewGroups);

// neuralcore
V6FORGE_DEFINE_ERROR(ShapeMismatch);
V6FORGE_DEFINE_ERROR(UnsupportedComposition);

// vae6
V6FORGE_DEFINE_ERROR(DomainError);
V6FORGE_DEFINE_ERROR(EmptySeedSet);
V6FORGE_DEFINE_ERROR(CorruptModel);
V6FORGE_DEFINE_ERROR(VersionMismatch);

// evalkit
V6FORGE_DEFINE_ERROR(EmptyCandidates);
V6FORGE_DEFINE_ERROR(AllRatesZero);
V6FORGE_DEFINE_ERROR(SampleExceedsUniverse);
V6FORGE_DEFINE_ERROR(InvalidArgument);

// cli
V6FORGE_DEFINE_ERROR(ConfigError);
V6FORGE_DEFINE_ERROR(IoError);

#undef V6FORGE_DEFINE_ERROR

}  // namespace v6forge
