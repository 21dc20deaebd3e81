#pragma once

#include <stdexcept>
#include <string>

namespace tsprobe {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// dataset
struct IngestShapeError : Error { using Error::Error; };
struct IngestLabelError : Error { using Error::Error; };
struct IngestValueError : Error { using Error::Error; };
struct CorruptStoreError : Error { using Error::Error; };
struct NotFoundError : Error { using Error::Error; };

// represent
struct SerializeValueError : Error { using Error::Error; };
struct RenderError : Error { using Error::Error; };

// prompting
struct LeakageError : Error { using Error::Error; };
struct AssemblyError : Error { using Error::Error; };
struct RewriterFormatError : Error { using Error::Error; };
struct VariantRejectedError : Error { using Error::Error; };

// model bridge
struct ContextLengthError : Error { using Error::Error; };
struct BackendError : Error { using Error::Error; };

// probes / metrics
struct DegenerateLabelsError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };

// config / CLI
struct ConfigError : Error { using Error::Error; };

}  // namespace tsprobe
